//! Reset-band sizing from the base-linear error budget.
//!
//! With the reset action disabled the loop is linear and its tracking error
//! for a sinusoidal reference is the sensitivity magnitude times the
//! reference amplitude.  A band at least as wide as that steady-state error
//! envelope, plus half a quantization level, swallows every zero crossing of
//! the quantized error, so the reset controller behaves exactly like its
//! base-linear twin for references below the chosen frequency edge.  This
//! module computes that band and verifies the no-reset claim by simulation.

use crate::elements::ResetController;
use crate::error::{Error, Result};
use crate::linear::{eigenvalues, freq_response, logspace, series, StateSpace};
use crate::sim::{
    simulate, NoiseSpec, Quantizer, ReferenceSignal, RunDuration, SimConfig, SineComponent,
};
use crate::stability::assemble_closed_loop;

/// Inputs to the band-sizing rule.
#[derive(Debug, Clone)]
pub struct DeltaTuningSpec {
    /// Upper edge of the frequency range the no-reset guarantee covers,
    /// rad/s.
    pub omega_s: f64,
    /// Reference the loop will track.
    pub reference: ReferenceSignal,
    /// Quantization level of the output path, output units.
    pub q: f64,
    /// Safety factor applied to the whole budget.
    pub k: f64,
    /// Extra additive margin for measurement noise, output units.
    pub noise_margin: f64,
}

impl DeltaTuningSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_s > 0.0) || !self.omega_s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega_s must be positive and finite, got {}",
                self.omega_s
            )));
        }
        if !(self.k >= 1.0) || !self.k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "safety factor must be at least 1, got {}",
                self.k
            )));
        }
        if !(self.q >= 0.0) || !self.q.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quantization level must be nonnegative, got {}",
                self.q
            )));
        }
        if !(self.noise_margin >= 0.0) || !self.noise_margin.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise margin must be nonnegative, got {}",
                self.noise_margin
            )));
        }
        Ok(())
    }
}

fn require_stable_base_loop(plant: &StateSpace, rc: &ResetController) -> Result<()> {
    let a = assemble_closed_loop(plant, rc.base())?;
    let worst = eigenvalues(&a)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst >= 0.0 {
        return Err(Error::UnstableBaseLoop(format!(
            "base-linear closed loop has an eigenvalue with real part {worst:.3e}"
        )));
    }
    Ok(())
}

/// Base-linear sensitivity magnitude `|1 / (1 + L(j omega))|` with the
/// reset action disabled.
pub fn bls_sensitivity(plant: &StateSpace, rc: &ResetController, omega: f64) -> Result<f64> {
    require_stable_base_loop(plant, rc)?;
    let loop_tf = series(&rc.base_linear(), plant)?;
    let l = freq_response(&loop_tf, omega)?;
    Ok(1.0 / (1.0 + l).norm())
}

/// The ungated band bound: per-component sensitivity-weighted amplitudes,
/// summed, plus half a quantization level and the noise margin, times the
/// safety factor.  Does not check component frequencies against `omega_s`.
pub fn delta_bound(plant: &StateSpace, rc: &ResetController, spec: &DeltaTuningSpec) -> Result<f64> {
    spec.validate()?;
    require_stable_base_loop(plant, rc)?;
    let loop_tf = series(&rc.base_linear(), plant)?;
    let mut tracking = 0.0;
    for c in spec.reference.components() {
        if c.amplitude == 0.0 {
            continue;
        }
        let l = freq_response(&loop_tf, c.frequency)?;
        tracking += c.amplitude / (1.0 + l).norm();
    }
    Ok(spec.k * (tracking + 0.5 * spec.q + spec.noise_margin))
}

/// Band width that keeps the loop reset-free for the given reference.
///
/// Every reference component must sit strictly below `omega_s`; otherwise
/// the no-reset guarantee does not apply and the call fails with the
/// offending frequency (use [`delta_bound`] to compute the number anyway).
pub fn tune_delta(plant: &StateSpace, rc: &ResetController, spec: &DeltaTuningSpec) -> Result<f64> {
    spec.validate()?;
    for c in spec.reference.components() {
        if c.amplitude != 0.0 && c.frequency >= spec.omega_s {
            return Err(Error::GuaranteeVoid {
                omega: c.frequency,
                omega_s: spec.omega_s,
            });
        }
    }
    delta_bound(plant, rc, spec)
}

/// One probe run of the no-reset verification.
#[derive(Debug, Clone, Copy)]
pub struct NoResetRun {
    pub omega: f64,
    pub amplitude: f64,
    /// Resets observed in the steady-state window.
    pub resets: usize,
    /// Largest steady-state error magnitude.
    pub max_abs_error: f64,
}

/// Verdict of [`verify_no_reset`]: true only if every probe stayed
/// reset-free in steady state.
#[derive(Debug, Clone)]
pub struct NoResetVerdict {
    pub ok: bool,
    pub runs: Vec<NoResetRun>,
}

impl NoResetVerdict {
    /// The first probe that triggered resets, if any.
    pub fn first_violation(&self) -> Option<&NoResetRun> {
        self.runs.iter().find(|r| r.resets > 0)
    }
}

/// Controller sample rate for the verification probes: fast enough to
/// resolve both the probe sine and the closed-loop dynamics.
fn probe_sample_rate(plant: &StateSpace, rc: &ResetController, omega: f64) -> Result<f64> {
    let a = assemble_closed_loop(plant, rc.base())?;
    let dyn_scale = eigenvalues(&a)
        .iter()
        .map(|l| l.norm())
        .fold(0.0f64, f64::max);
    Ok((12.0 * dyn_scale).max(300.0 * omega) / (2.0 * std::f64::consts::PI))
}

fn probe_run(
    plant: &StateSpace,
    rc: &ResetController,
    quantizer: &Quantizer,
    omega: f64,
    amplitude: f64,
    delta: f64,
) -> Result<NoResetRun> {
    let banded = rc.clone().with_band(delta)?;
    let reference = ReferenceSignal::new(vec![SineComponent {
        amplitude,
        frequency: omega,
        phase: 0.0,
    }])?;
    let cfg = SimConfig {
        sample_rate_hz: probe_sample_rate(plant, rc, omega)?,
        substeps: 4,
        duration: RunDuration::Periods(12),
        transient_discard: 0.5,
    };
    let trace = simulate(plant, &banded, quantizer, &reference, &NoiseSpec::None, &cfg)?;
    let total = cfg.duration_seconds(&reference);
    let t0 = cfg.steady_start(total);
    Ok(NoResetRun {
        omega,
        amplitude,
        resets: trace.reset_count_in_window(t0, total)?,
        max_abs_error: trace.max_abs_error_in(t0, total)?,
    })
}

/// Simulate the banded loop and confirm it never resets in steady state.
///
/// Probes every reference component, then five log-spaced frequencies up
/// to `0.9 omega_s`.  Probe amplitudes are sized to the same base-linear
/// error budget the band was tuned for (capped at the total reference
/// amplitude), since the guarantee covers signals within that budget, not
/// arbitrary ones.
pub fn verify_no_reset(
    plant: &StateSpace,
    rc: &ResetController,
    quantizer: &Quantizer,
    spec: &DeltaTuningSpec,
    delta: f64,
) -> Result<NoResetVerdict> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    spec.validate()?;
    require_stable_base_loop(plant, rc)?;

    let mut runs = Vec::new();
    let components: Vec<SineComponent> = spec
        .reference
        .components()
        .iter()
        .copied()
        .filter(|c| c.amplitude > 0.0)
        .collect();
    for c in &components {
        runs.push(probe_run(plant, rc, quantizer, c.frequency, c.amplitude, delta)?);
    }

    if !components.is_empty() {
        let loop_tf = series(&rc.base_linear(), plant)?;
        let mut budget = 0.0;
        for c in &components {
            let l = freq_response(&loop_tf, c.frequency)?;
            budget += c.amplitude / (1.0 + l).norm();
        }
        let total_amplitude = spec.reference.amplitude_sum();
        for omega in logspace(spec.omega_s / 20.0, 0.9 * spec.omega_s, 5) {
            let l = freq_response(&loop_tf, omega)?;
            let amplitude = (budget * (1.0 + l).norm()).min(total_amplitude);
            if amplitude == 0.0 {
                continue;
            }
            runs.push(probe_run(plant, rc, quantizer, omega, amplitude, delta)?);
        }
    }

    let ok = runs.iter().all(|r| r.resets == 0);
    Ok(NoResetVerdict { ok, runs })
}

/// Steady-state output error produced by an input disturbance of the given
/// amplitude at `omega`: the process-sensitivity magnitude `|P S|` times
/// the amplitude, with the reset action disabled.
pub fn error_from_disturbance(
    plant: &StateSpace,
    rc: &ResetController,
    d_amplitude: f64,
    omega: f64,
) -> Result<f64> {
    if !(d_amplitude >= 0.0) || !d_amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "disturbance amplitude must be nonnegative, got {d_amplitude}"
        )));
    }
    require_stable_base_loop(plant, rc)?;
    let p = freq_response(plant, omega)?;
    let loop_tf = series(&rc.base_linear(), plant)?;
    let l = freq_response(&loop_tf, omega)?;
    Ok((p / (1.0 + l)).norm() * d_amplitude)
}
