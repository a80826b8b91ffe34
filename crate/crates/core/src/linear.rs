//! Dense state-space primitives: matrix exponential, frequency response,
//! series composition, and the two discretizations used by the simulator.
//!
//! Systems here are small (a handful of states), so everything runs on
//! dynamically sized dense matrices with partial-pivoting solves. Solves are
//! guarded: a zero pivot or a pivot spread beyond 1e12 is reported as
//! [`Error::Singular`] instead of silently returning garbage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Pivot-ratio limit for the guarded solvers.
const COND_GUARD: f64 = 1e12;

// ---------------------------------------------------------------------------
// guarded linear solves
// ---------------------------------------------------------------------------

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
///
/// Fails if a pivot is zero or if max|pivot| / min|pivot| exceeds the
/// conditioning guard.
pub fn solve_real(a: &Mat, b: &Mat, context: &str) -> Result<Mat> {
    solve_generic(
        a.map(|v| Complex64::new(v, 0.0)),
        b.map(|v| Complex64::new(v, 0.0)),
        context,
    )
    .map(|x| x.map(|v| v.re))
}

/// Complex variant of [`solve_real`].
pub fn solve_complex(a: &CMat, b: &CMat, context: &str) -> Result<CMat> {
    solve_generic(a.clone(), b.clone(), context)
}

/// Power of two that brings `v` into `[1, 2)`; exact, so scaling never
/// perturbs the solution bits.
fn pow2_scale(v: f64) -> f64 {
    2f64.powi(-(v.log2().floor() as i32))
}

fn solve_generic(mut a: CMat, mut b: CMat, context: &str) -> Result<CMat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "solve expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "solve rhs has {} rows, matrix has {}",
            b.nrows(),
            n
        )));
    }
    if n == 0 {
        return Ok(b);
    }
    if a.iter().any(|v| !v.norm().is_finite()) {
        return Err(Error::NonFinite("solve matrix".into()));
    }

    // Equilibrate rows then columns by powers of two so that the pivot-ratio
    // guard below measures conditioning, not the scaling of state-space
    // composites with large gains.
    for i in 0..n {
        let m = (0..n).map(|j| a[(i, j)].norm()).fold(0.0, f64::max);
        if m == 0.0 {
            return Err(Error::Singular {
                context: context.to_string(),
            });
        }
        let s = pow2_scale(m);
        for j in 0..n {
            a[(i, j)] *= s;
        }
        for j in 0..b.ncols() {
            b[(i, j)] *= s;
        }
    }
    let mut col_scale = vec![1.0f64; n];
    for j in 0..n {
        let m = (0..n).map(|i| a[(i, j)].norm()).fold(0.0, f64::max);
        if m == 0.0 {
            return Err(Error::Singular {
                context: context.to_string(),
            });
        }
        let s = pow2_scale(m);
        col_scale[j] = s;
        for i in 0..n {
            a[(i, j)] *= s;
        }
    }

    let mut piv_min = f64::INFINITY;
    let mut piv_max: f64 = 0.0;

    for k in 0..n {
        let mut p = k;
        let mut best = a[(k, k)].norm();
        for i in (k + 1)..n {
            let v = a[(i, k)].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Singular {
                context: context.to_string(),
            });
        }
        if p != k {
            a.swap_rows(k, p);
            b.swap_rows(k, p);
        }
        piv_min = piv_min.min(best);
        piv_max = piv_max.max(best);

        let pivot = a[(k, k)];
        for i in (k + 1)..n {
            let f = a[(i, k)] / pivot;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            a[(i, k)] = Complex64::new(0.0, 0.0);
            for j in (k + 1)..n {
                let v = a[(k, j)];
                a[(i, j)] -= f * v;
            }
            for j in 0..b.ncols() {
                let v = b[(k, j)];
                b[(i, j)] -= f * v;
            }
        }
    }

    if piv_max / piv_min > COND_GUARD {
        return Err(Error::Singular {
            context: context.to_string(),
        });
    }

    // back substitution, then undo the column scaling
    for j in 0..b.ncols() {
        for k in (0..n).rev() {
            let mut s = b[(k, j)];
            for i in (k + 1)..n {
                s -= a[(k, i)] * b[(i, j)];
            }
            b[(k, j)] = s / a[(k, k)];
        }
        for k in 0..n {
            b[(k, j)] *= col_scale[k];
        }
    }
    Ok(b)
}

// ---------------------------------------------------------------------------
// matrix exponential
// ---------------------------------------------------------------------------

/// Degree-13 Padé numerator coefficients, normalized so the constant term is 1.
const PADE13: [f64; 14] = [
    1.0,
    0.5,
    0.12,
    1.833333333333333e-2,
    1.992753623188406e-3,
    1.630434782608696e-4,
    1.035196687370600e-5,
    5.175983436853002e-7,
    2.043151356652500e-8,
    6.306022705717593e-10,
    1.483770048404140e-11,
    2.529153491597966e-13,
    2.810170546219962e-15,
    1.544049750670309e-17,
];

fn one_norm(m: &Mat) -> f64 {
    let mut best: f64 = 0.0;
    for j in 0..m.ncols() {
        let s: f64 = m.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Matrix exponential by scaling and squaring around a degree-13 Padé
/// approximant. The argument is halved until its 1-norm is at most 0.5, the
/// approximant is evaluated once, and the result is squared back up.
pub fn mat_exp(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!(
            "mat_exp expects a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mat_exp argument".into()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }

    let norm = one_norm(m);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let a = m / 2f64.powi(squarings as i32);

    let eye = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (PADE13[13] * &a6 + PADE13[11] * &a4 + PADE13[9] * &a2)
        + PADE13[7] * &a6
        + PADE13[5] * &a4
        + PADE13[3] * &a2
        + PADE13[1] * &eye;
    let u = &a * u_inner;
    let v = &a6 * (PADE13[12] * &a6 + PADE13[10] * &a4 + PADE13[8] * &a2)
        + PADE13[6] * &a6
        + PADE13[4] * &a4
        + PADE13[2] * &a2
        + PADE13[0] * &eye;

    let mut r = solve_real(&(&v - &u), &(&v + &u), "mat_exp Pade denominator")?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// state-space types
// ---------------------------------------------------------------------------

/// Continuous-time LTI system `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B has {} rows but A is {}x{}",
                b.nrows(),
                n,
                n
            )));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!(
                "C has {} columns but A is {}x{}",
                c.ncols(),
                n,
                n
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D must be {}x{}, got {}x{}",
                c.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if b.ncols() == 0 || c.nrows() == 0 {
            return Err(Error::Dimension(
                "system needs at least one input and one output".into(),
            ));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("state-space matrix {name}")));
            }
        }
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn d(&self) -> &Mat {
        &self.d
    }

    /// Number of states.
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn is_siso(&self) -> bool {
        self.n_inputs() == 1 && self.n_outputs() == 1
    }
    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|v| *v == 0.0)
    }

    /// Static gain `y = k u` (no states).
    pub fn gain(k: f64) -> Self {
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, 1),
            c: Mat::zeros(1, 0),
            d: Mat::from_element(1, 1, k),
        }
    }

    /// `1/s`.
    pub fn integrator() -> Self {
        Self {
            a: Mat::zeros(1, 1),
            b: Mat::from_element(1, 1, 1.0),
            c: Mat::from_element(1, 1, 1.0),
            d: Mat::zeros(1, 1),
        }
    }

    /// First-order low-pass `1 / (s/w + 1)`.
    pub fn first_order_lpf(w: f64) -> Result<Self> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "low-pass corner must be positive, got {w}"
            )));
        }
        Self::new(
            Mat::from_element(1, 1, -w),
            Mat::from_element(1, 1, w),
            Mat::from_element(1, 1, 1.0),
            Mat::zeros(1, 1),
        )
    }

    /// Lead/lag section `(s/w_zero + 1) / (s/w_pole + 1)`.
    pub fn lead(w_zero: f64, w_pole: f64) -> Result<Self> {
        if !(w_zero > 0.0 && w_pole > 0.0) || !w_zero.is_finite() || !w_pole.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lead corners must be positive, got zero={w_zero}, pole={w_pole}"
            )));
        }
        // (s/wz+1)/(s/wp+1) = (wp/wz) [1 + (wz-wp)/(s+wp)]
        let k = w_pole / w_zero;
        Self::new(
            Mat::from_element(1, 1, -w_pole),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, k * (w_zero - w_pole)),
            Mat::from_element(1, 1, k),
        )
    }

    /// Rigid mass `1 / (m s^2)`; states are position and velocity.
    pub fn mass(m: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mass must be positive, got {m}"
            )));
        }
        Self::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0 / m]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            Mat::zeros(1, 1),
        )
    }

    /// Second-order plant `gain / (s^2 + damping s + stiffness)`.
    pub fn second_order(gain: f64, damping: f64, stiffness: f64) -> Result<Self> {
        for (name, v) in [("gain", gain), ("damping", damping), ("stiffness", stiffness)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("second_order {name}")));
            }
        }
        Self::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -stiffness, -damping]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[gain, 0.0]),
            Mat::zeros(1, 1),
        )
    }
}

/// Discrete-time LTI system `x[k+1] = Ad x[k] + Bd u[k]`, `y = Cd x + Dd u`,
/// at a fixed sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    pub ad: Mat,
    pub bd: Mat,
    pub cd: Mat,
    pub dd: Mat,
    pub period: f64,
}

impl DiscreteStateSpace {
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let y = &self.cd * x + &self.dd * u;
        let x_next = &self.ad * x + &self.bd * u;
        (x_next, y)
    }

    /// Response at `z = exp(j w period)`.
    pub fn freq_response(&self, w: f64) -> Result<Complex64> {
        if self.cd.nrows() != 1 || self.bd.ncols() != 1 {
            return Err(Error::Dimension("discrete freq_response needs SISO".into()));
        }
        let n = self.ad.nrows();
        if n == 0 {
            return Ok(Complex64::new(self.dd[(0, 0)], 0.0));
        }
        let z = Complex64::from_polar(1.0, w * self.period);
        let m = CMat::from_fn(n, n, |i, j| {
            let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.ad[(i, j)], 0.0)
        });
        let rhs = self.bd.map(|v| Complex64::new(v, 0.0));
        let x = solve_complex(&m, &rhs, "discrete resolvent")?;
        let mut g = Complex64::new(self.dd[(0, 0)], 0.0);
        for k in 0..n {
            g += Complex64::new(self.cd[(0, k)], 0.0) * x[(k, 0)];
        }
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

/// `(j w I - A)^{-1} rhs` with the usual conditioning guard.
pub fn resolvent_solve(a: &Mat, w: f64, rhs: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let m = CMat::from_fn(n, n, |i, j| {
        let diag = if i == j {
            Complex64::new(0.0, w)
        } else {
            Complex64::new(0.0, 0.0)
        };
        diag - Complex64::new(a[(i, j)], 0.0)
    });
    solve_complex(&m, rhs, "resolvent")
}

/// SISO frequency response `C (j w I - A)^{-1} B + D` at `w` rad/s.
pub fn freq_response(sys: &StateSpace, w: f64) -> Result<Complex64> {
    if !sys.is_siso() {
        return Err(Error::Dimension("freq_response needs a SISO system".into()));
    }
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "frequency must be positive and finite, got {w}"
        )));
    }
    let n = sys.order();
    if n == 0 {
        return Ok(Complex64::new(sys.d()[(0, 0)], 0.0));
    }
    let rhs = sys.b().map(|v| Complex64::new(v, 0.0));
    let x = resolvent_solve(sys.a(), w, &rhs)?;
    let mut g = Complex64::new(sys.d()[(0, 0)], 0.0);
    for k in 0..n {
        g += Complex64::new(sys.c()[(0, k)], 0.0) * x[(k, 0)];
    }
    Ok(g)
}

/// Series composition: the signal enters `first`, then `second`.
///
/// The composed state vector keeps `first`'s states ahead of `second`'s, so
/// callers that track a particular state by index can rely on the layout.
pub fn series(first: &StateSpace, second: &StateSpace) -> Result<StateSpace> {
    if first.n_outputs() != second.n_inputs() {
        return Err(Error::Dimension(format!(
            "series: first has {} outputs, second expects {} inputs",
            first.n_outputs(),
            second.n_inputs()
        )));
    }
    let n1 = first.order();
    let n2 = second.order();
    let n = n1 + n2;

    let mut a = Mat::zeros(n, n);
    a.view_mut((0, 0), (n1, n1)).copy_from(first.a());
    a.view_mut((n1, n1), (n2, n2)).copy_from(second.a());
    a.view_mut((n1, 0), (n2, n1))
        .copy_from(&(second.b() * first.c()));

    let mut b = Mat::zeros(n, first.n_inputs());
    b.view_mut((0, 0), (n1, first.n_inputs())).copy_from(first.b());
    b.view_mut((n1, 0), (n2, first.n_inputs()))
        .copy_from(&(second.b() * first.d()));

    let mut c = Mat::zeros(second.n_outputs(), n);
    c.view_mut((0, 0), (second.n_outputs(), n1))
        .copy_from(&(second.d() * first.c()));
    c.view_mut((0, n1), (second.n_outputs(), n2))
        .copy_from(second.c());

    let d = second.d() * first.d();

    StateSpace::new(a, b, c, d)
}

/// Bilinear (trapezoidal) discretization at sample period `t`.
pub fn c2d_tustin(sys: &StateSpace, t: f64) -> Result<DiscreteStateSpace> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sample period must be positive, got {t}"
        )));
    }
    let n = sys.order();
    if n == 0 {
        return Ok(DiscreteStateSpace {
            ad: Mat::zeros(0, 0),
            bd: Mat::zeros(0, sys.n_inputs()),
            cd: Mat::zeros(sys.n_outputs(), 0),
            dd: sys.d().clone(),
            period: t,
        });
    }
    let h = t / 2.0;
    let eye = Mat::identity(n, n);
    let lhs = &eye - h * sys.a();

    let ad = solve_real(&lhs, &(&eye + h * sys.a()), "tustin")?;
    let x = solve_real(&lhs, sys.b(), "tustin")?;
    let bd = t * &x;
    let cd_t = solve_real(&lhs.transpose(), &sys.c().transpose(), "tustin")?;
    let cd = cd_t.transpose();
    let dd = sys.d() + h * (sys.c() * &x);

    Ok(DiscreteStateSpace {
        ad,
        bd,
        cd,
        dd,
        period: t,
    })
}

/// Zero-order-hold discretization at sample period `t`, via the exponential of
/// the `[A B; 0 0]` block matrix.
pub fn c2d_zoh(sys: &StateSpace, t: f64) -> Result<DiscreteStateSpace> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sample period must be positive, got {t}"
        )));
    }
    let n = sys.order();
    let m = sys.n_inputs();
    if n == 0 {
        return Ok(DiscreteStateSpace {
            ad: Mat::zeros(0, 0),
            bd: Mat::zeros(0, m),
            cd: Mat::zeros(sys.n_outputs(), 0),
            dd: sys.d().clone(),
            period: t,
        });
    }
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(sys.a());
    aug.view_mut((0, n), (n, m)).copy_from(sys.b());
    let e = mat_exp(&(aug * t))?;
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, m)).into_owned();
    Ok(DiscreteStateSpace {
        ad,
        bd,
        cd: sys.c().clone(),
        dd: sys.d().clone(),
        period: t,
    })
}

// ---------------------------------------------------------------------------
// eigenvalue helpers
// ---------------------------------------------------------------------------

/// Eigenvalues of a square real matrix.
pub fn eigenvalues(m: &Mat) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect()
}

/// Eigenvalues of a symmetric real matrix (symmetrized first).
pub fn symmetric_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigen().eigenvalues.iter().copied().collect()
}

/// Smallest eigenvalue of the Hermitian part `(H + H^*) / 2` of a complex
/// matrix, computed through the real symmetric embedding `[X -Y; Y X]`.
pub fn hermitian_part_min_eig(h: &CMat) -> f64 {
    let n = h.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    if n == 1 {
        return h[(0, 0)].re;
    }
    let mut x = Mat::zeros(n, n);
    let mut y = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = 0.5 * (h[(i, j)] + h[(j, i)].conj());
            x[(i, j)] = v.re;
            y[(i, j)] = v.im;
        }
    }
    let mut emb = Mat::zeros(2 * n, 2 * n);
    emb.view_mut((0, 0), (n, n)).copy_from(&x);
    emb.view_mut((n, n), (n, n)).copy_from(&x);
    emb.view_mut((0, n), (n, n)).copy_from(&(-&y));
    emb.view_mut((n, 0), (n, n)).copy_from(&y);
    symmetric_eigenvalues(&emb)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// grid helpers
// ---------------------------------------------------------------------------

/// `n` logarithmically spaced points over `[lo, hi]`, endpoints included.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "bad logspace arguments");
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Logarithmic grid over `[lo, hi]` with a fixed density per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && per_decade >= 1, "bad log_grid arguments");
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).ceil() as usize + 1;
    logspace(lo, hi, n.max(2))
}
