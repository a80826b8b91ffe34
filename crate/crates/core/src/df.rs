//! Sinusoidal-input describing functions for reset controllers.
//!
//! For a reset controller driven by `e = E sin(w t)`, the steady-state output
//! is periodic; the describing function is the complex ratio of its
//! fundamental to the input phasor. [`sidf`] and [`sidf_band`] evaluate it in
//! closed form; [`df_oracle`] measures the same quantity from an explicit
//! time-domain run with machine-accurate segment propagation, serving as an
//! independent cross-check of the closed form.
//!
//! The closed form extends the linear frequency response with a correction
//! built from the half-period state transition `exp(pi A / w)` and the jump
//! map. With the jump map equal to identity the correction vanishes and every
//! routine reduces to the plain frequency response.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::elements::ResetController;
use crate::error::{Error, Result};
use crate::linear::{mat_exp, resolvent_solve, solve_real, CMat, Mat};

/// One evaluated describing-function sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfPoint {
    /// Evaluation frequency, rad/s.
    pub omega: f64,
    /// Input amplitude, in error units.
    pub amplitude: f64,
    /// Reset-band width, in error units.
    pub delta: f64,
    /// Complex describing-function value.
    pub value: Complex64,
}

/// Half-period reset correction: the real matrix `Theta` such that the
/// describing function is `C (jwI - A)^{-1} (I + e^{-j phi} j Theta M) B + D`
/// with the band-geometry factor `M` applied by the caller.
///
/// `Theta = (2/pi)(I + P)(I + A_rho P)^{-1}(I - A_rho)((A/w)^2 + I)^{-1}`
/// where `P = exp(pi A / w)` is the half-period transition.
fn theta_rho(a: &Mat, a_rho: &[f64], w: f64) -> Result<Mat> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let p = mat_exp(&(a * (PI / w)))?;

    // (I + A_rho P) X = (I - A_rho), with diagonal A_rho applied row-wise
    let mut lhs = p.clone();
    for i in 0..n {
        for j in 0..n {
            lhs[(i, j)] *= a_rho[i];
        }
    }
    lhs += &eye;
    let mut rhs = Mat::zeros(n, n);
    for i in 0..n {
        rhs[(i, i)] = 1.0 - a_rho[i];
    }
    let x = solve_real(&lhs, &rhs, "reset correction (I + A_rho P)")?;

    // right-divide by ((A/w)^2 + I) via the transposed solve
    let aw = a / w;
    let denom = &aw * &aw + &eye;
    let left = (&eye + &p) * x;
    let yt = solve_real(&denom.transpose(), &left.transpose(), "reset correction (A/w)^2 + I")?;
    Ok(yt.transpose() * (2.0 / PI))
}

/// Shared closed-form evaluation, parametrized by the band ratio
/// `r = delta / amplitude` in `[0, 1)`.
fn df_closed_form(rc: &ResetController, w: f64, r: f64) -> Result<Complex64> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "frequency must be positive and finite, got {w}"
        )));
    }
    let base = rc.base();
    let n = base.order();
    if n == 0 {
        return Ok(Complex64::new(base.d()[(0, 0)], 0.0));
    }

    let rhs = if rc.is_linear() {
        // identity jump: the correction is exactly zero
        base.b().map(|v| Complex64::new(v, 0.0))
    } else {
        let theta = theta_rho(base.a(), rc.a_rho(), w)?;
        // reset phase: phi = pi - asin(r), expressed through its sine and
        // cosine directly so that r = 0 gives the exact pair (0, -1)
        let sin_phi = r;
        let cos_phi = -(1.0 - r * r).sqrt();
        let geom = (base.a() * sin_phi + Mat::identity(n, n) * (w * cos_phi)) / w;
        let correction = theta * geom * base.b();
        let coeff = Complex64::new(cos_phi, -sin_phi) * Complex64::i();
        CMat::from_fn(n, 1, |i, _| {
            Complex64::new(base.b()[(i, 0)], 0.0) + coeff * correction[(i, 0)]
        })
    };

    let x = resolvent_solve(base.a(), w, &rhs)?;
    let mut g = Complex64::new(base.d()[(0, 0)], 0.0);
    for k in 0..n {
        g += x[(k, 0)] * base.c()[(0, k)];
    }
    Ok(g)
}

/// Describing function of a reset controller under a zero-crossing trigger.
///
/// Errors with a singularity when the half-period fixed-point map
/// `I + A_rho exp(pi A / w)` is not invertible at this frequency (sweep
/// callers should skip such points).
pub fn sidf(rc: &ResetController, w: f64) -> Result<Complex64> {
    df_closed_form(rc, w, 0.0)
}

/// Describing function with a reset band of width `delta` under input
/// amplitude `amplitude`. Depends on the two only through their ratio;
/// `delta = 0` reduces exactly to [`sidf`].
///
/// Refuses `delta >= amplitude`: the error then never leaves the band and no
/// resets occur (and ratios near 1 risk limit cycling, warned at > 0.9).
pub fn sidf_band(rc: &ResetController, w: f64, amplitude: f64, delta: f64) -> Result<Complex64> {
    let r = band_ratio(amplitude, delta)?;
    df_closed_form(rc, w, r)
}

fn band_ratio(amplitude: f64, delta: f64) -> Result<f64> {
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "amplitude must be positive and finite, got {amplitude}"
        )));
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "band width must be nonnegative and finite, got {delta}"
        )));
    }
    let r = delta / amplitude;
    if r >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "band width {delta} must be smaller than the amplitude {amplitude}; \
             the input never leaves the band"
        )));
    }
    if r > 0.9 {
        log::warn!(
            "band ratio {r:.3} is close to 1; limit cycling may occur in practice"
        );
    }
    Ok(r)
}

/// Substeps per half period in the oracle; 2048 samples per period keeps the
/// trapezoid Fourier extraction far below the comparison tolerances.
const ORACLE_SUBSTEPS: usize = 1024;
/// Half periods simulated in total (about 20 periods plus the lead-in).
const ORACLE_SEGMENTS: usize = 40;
/// Half periods before the measurement window opens (about 15 periods).
const ORACLE_DISCARD: usize = 30;

/// Time-domain measurement of the describing function.
///
/// Simulates the open-loop element under `e = amplitude * sin(w t)` for 20
/// periods with exact propagation between reset instants (the input is
/// synthesized by an appended oscillator state pair, making each substep a
/// single matrix-exponential multiply), discards the first 15 periods, and
/// extracts the fundamental of `u` from the last 5.
///
/// Fails with an unsettled-oracle error when the last two periods still
/// differ by more than 1% RMS.
pub fn df_oracle(rc: &ResetController, w: f64, amplitude: f64, delta: f64) -> Result<Complex64> {
    let r = band_ratio(amplitude, delta)?;
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "frequency must be positive and finite, got {w}"
        )));
    }
    let base = rc.base();
    let n = base.order();
    if n == 0 {
        return Ok(Complex64::new(base.d()[(0, 0)], 0.0));
    }

    // Augmented autonomous system [x; s; c] with s = sin(wt), c = cos(wt);
    // the input enters as B * amplitude * s via the initial condition c(0) =
    // amplitude.
    let mut aug = Mat::zeros(n + 2, n + 2);
    aug.view_mut((0, 0), (n, n)).copy_from(base.a());
    aug.view_mut((0, n), (n, 1)).copy_from(base.b());
    aug[(n, n + 1)] = w;
    aug[(n + 1, n)] = -w;

    let phi = PI - r.asin();
    let step_half = mat_exp(&(&aug * (PI / w / ORACLE_SUBSTEPS as f64)))?;
    let first_steps = ((phi / PI) * ORACLE_SUBSTEPS as f64).ceil().max(1.0) as usize;
    let step_first = mat_exp(&(&aug * (phi / w / first_steps as f64)))?;

    let mut z = DVector::<f64>::zeros(n + 2);
    z[n + 1] = amplitude;

    let u_of = |z: &DVector<f64>| -> f64 {
        let mut u = base.d()[(0, 0)] * z[n];
        for k in 0..n {
            u += base.c()[(0, k)] * z[k];
        }
        u
    };
    let jump = |z: &mut DVector<f64>| {
        for (k, g) in rc.a_rho().iter().enumerate() {
            z[k] *= g;
        }
    };

    // lead-in to the first reset instant
    for _ in 0..first_steps {
        z = &step_first * z;
    }
    jump(&mut z);

    let dt = PI / w / ORACLE_SUBSTEPS as f64;
    let mut fourier = Complex64::new(0.0, 0.0);
    // uniform substep samples of the last four half periods, for the
    // periodicity gate
    let mut tail: Vec<f64> = Vec::with_capacity(4 * ORACLE_SUBSTEPS);

    for seg in 0..ORACLE_SEGMENTS {
        let t0 = (phi + seg as f64 * PI) / w;
        let measuring = seg >= ORACLE_DISCARD;
        let mut prev = u_of(&z) * Complex64::from_polar(1.0, -w * t0);
        for m in 1..=ORACLE_SUBSTEPS {
            z = &step_half * z;
            let t = t0 + m as f64 * dt;
            let u = u_of(&z);
            if !u.is_finite() {
                return Err(Error::Divergence { time: t });
            }
            if measuring {
                let f = u * Complex64::from_polar(1.0, -w * t);
                fourier += (prev + f) * (0.5 * dt);
                prev = f;
            }
            if seg >= ORACLE_SEGMENTS - 4 {
                tail.push(u);
            }
        }
        jump(&mut z);
    }

    let period_len = 2 * ORACLE_SUBSTEPS;
    let (older, last) = tail.split_at(period_len);
    let mut diff2 = 0.0;
    let mut last2 = 0.0;
    for (a, b) in older.iter().zip(last) {
        diff2 += (a - b) * (a - b);
        last2 += b * b;
    }
    if diff2.sqrt() > 0.01 * last2.sqrt() {
        return Err(Error::OracleUnsettled(format!(
            "last two periods differ by {:.3}% RMS at {w} rad/s",
            100.0 * diff2.sqrt() / last2.sqrt().max(f64::MIN_POSITIVE)
        )));
    }

    let window = 5.0 * 2.0 * PI / w;
    Ok(Complex64::i() * 2.0 * fourier / (amplitude * window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::{make_cglp, make_clegg, make_fore, make_sore};
    use crate::linear::freq_response;

    fn assert_close(got: Complex64, want: Complex64, rel: f64) {
        assert!(
            (got - want).norm() <= rel * want.norm(),
            "got {got}, want {want} (rel {rel})"
        );
    }

    #[test]
    fn clegg_phase_is_constant() {
        // full-reset integrator: phase -90 deg + atan(4/pi) = -38.146 deg at
        // every frequency, magnitude sqrt(1 + 16/pi^2)/w
        let rc = make_clegg(0.0).unwrap();
        for w in [0.1, 1.0, 10.0, 100.0] {
            let g = sidf(&rc, w).unwrap();
            let phase = g.arg().to_degrees();
            assert!(
                (phase - (-38.146025987222544)).abs() < 0.05,
                "phase {phase} at {w}"
            );
            let mag = (1.0 + 16.0 / (PI * PI)).sqrt() / w;
            assert!((g.norm() - mag).abs() <= 1e-12 * mag);
        }
    }

    #[test]
    fn clegg_value_at_unit_frequency() {
        let g = sidf(&make_clegg(0.0).unwrap(), 1.0).unwrap();
        assert_close(g, Complex64::new(4.0 / PI, -1.0), 1e-14);
    }

    #[test]
    fn identity_jump_equals_linear_response() {
        let rc = make_fore(100.0, 1.0).unwrap();
        for w in [1.0, 50.0, 100.0, 5000.0] {
            let df = sidf(&rc, w).unwrap();
            let lin = freq_response(rc.base(), w).unwrap();
            assert_eq!(df, lin);
        }
    }

    #[test]
    fn band_zero_reduces_to_plain_sidf() {
        let rc = make_cglp(160.0, 172.0, 9420.0, 0.5).unwrap();
        for w in [10.0, 172.0, 942.0] {
            let plain = sidf(&rc, w).unwrap();
            let banded = sidf_band(&rc, w, 3.7, 0.0).unwrap();
            assert_eq!(plain, banded);
        }
    }

    #[test]
    fn band_depends_only_on_ratio() {
        let rc = make_fore(100.0, 0.0).unwrap();
        for w in [10.0, 100.0] {
            let a = sidf_band(&rc, w, 0.7, 0.3).unwrap();
            let b = sidf_band(&rc, w, 7.0, 3.0).unwrap();
            assert_close(a, b, 1e-12);
        }
    }

    #[test]
    fn frozen_closed_form_values() {
        // reference values computed independently from the same derivation
        let fore = make_fore(100.0, 0.0).unwrap();
        assert_close(
            sidf(&fore, 100.0).unwrap(),
            Complex64::new(0.6660326517939439, -0.33396734820605617),
            1e-12,
        );
        assert_close(
            sidf_band(&fore, 100.0, 1.0, 0.5).unwrap(),
            Complex64::new(0.5830163258969719, -0.19017885389480496),
            1e-12,
        );
        let fore_half = make_fore(100.0, 0.5).unwrap();
        assert_close(
            sidf(&fore_half, 100.0).unwrap(),
            Complex64::new(0.5812605328839139, -0.4187394671160861),
            1e-12,
        );
        let cglp = make_cglp(160.0, 172.0, 9420.0, 0.5).unwrap();
        assert_close(
            sidf(&cglp, 942.0).unwrap(),
            Complex64::new(0.9611768177138204, 0.2461650248619299),
            1e-12,
        );
        assert_close(
            sidf_band(&cglp, 942.0, 2.0, 1.0).unwrap(),
            Complex64::new(0.7878799043583836, 0.20314435099047143),
            1e-12,
        );
        let ci = make_clegg(0.0).unwrap();
        assert_close(
            sidf_band(&ci, 1.0, 1.0, 0.5).unwrap(),
            Complex64::new(0.954929658551372, -0.4486711045782079),
            1e-12,
        );
    }

    #[test]
    fn band_input_validation() {
        let rc = make_fore(100.0, 0.0).unwrap();
        assert!(sidf_band(&rc, 10.0, 1.0, 1.0).is_err());
        assert!(sidf_band(&rc, 10.0, 1.0, 2.0).is_err());
        assert!(sidf_band(&rc, 10.0, 1.0, -0.1).is_err());
        assert!(sidf_band(&rc, 10.0, 0.0, 0.0).is_err());
        assert!(sidf_band(&rc, -5.0, 1.0, 0.0).is_err());
        assert!(sidf_band(&rc, 10.0, 1.0, 0.95).is_ok());
    }

    #[test]
    fn full_sign_flip_integrator_is_singular() {
        // gamma = -1 on an integrator: the half-period fixed-point map
        // I + A_rho exp(pi A / w) is exactly zero at every frequency
        let rc = make_clegg(-1.0).unwrap();
        assert!(matches!(sidf(&rc, 1.0), Err(Error::Singular { .. })));
        assert!(matches!(sidf(&rc, 100.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn oracle_matches_linear_response_for_identity_jump() {
        let rc = make_sore(50.0, 0.7, 1.0).unwrap();
        for w in [5.0, 50.0, 200.0] {
            let o = df_oracle(&rc, w, 2.0, 0.0).unwrap();
            let lin = freq_response(rc.base(), w).unwrap();
            assert_close(o, lin, 1e-6);
        }
    }

    #[test]
    fn oracle_clegg_phase() {
        let rc = make_clegg(0.0).unwrap();
        let o = df_oracle(&rc, 1.0, 1.0, 0.0).unwrap();
        let phase = o.arg().to_degrees();
        assert!((phase + 38.146).abs() < 0.3, "oracle phase {phase}");
    }

    #[test]
    fn oracle_agrees_with_closed_form_on_fore() {
        let rc = make_fore(100.0, 0.0).unwrap();
        for (w, r) in [(100.0, 0.0), (100.0, 0.5), (30.0, 0.25)] {
            let cf = sidf_band(&rc, w, 1.0, r).unwrap();
            let o = df_oracle(&rc, w, 1.0, r).unwrap();
            assert!((cf.norm() - o.norm()).abs() <= 0.01 * o.norm());
            let dphase = (cf.arg() - o.arg()).to_degrees().abs();
            assert!(dphase <= 1.0, "phase gap {dphase} deg");
        }
    }

    #[test]
    fn oracle_amplitude_invariance() {
        let rc = make_fore(100.0, 0.0).unwrap();
        let a = df_oracle(&rc, 50.0, 1.0, 0.25).unwrap();
        let b = df_oracle(&rc, 50.0, 100.0, 25.0).unwrap();
        assert_close(a, b, 1e-9);
    }

    #[test]
    fn df_point_carries_inputs() {
        let p = DfPoint {
            omega: 10.0,
            amplitude: 2.0,
            delta: 0.5,
            value: Complex64::new(1.0, -1.0),
        };
        assert_eq!(p.omega, 10.0);
        assert_eq!(p.value.im, -1.0);
    }
}
