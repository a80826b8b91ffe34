//! Reset elements: linear controllers whose states jump when the input
//! crosses a trigger condition.
//!
//! A [`ResetController`] flows along its base dynamics `x' = A x + B e`,
//! `u = C x + D e` and, at trigger instants, jumps `x <- A_rho x` where
//! `A_rho` is diagonal. An entry of 1 marks a state that never resets; any
//! other entry scales its state at each trigger. With every entry equal to 1
//! the controller is plain linear.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linear::{series, Mat, StateSpace};

/// When the controller's state jump fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResetCondition {
    /// Jump when the input signal crosses zero.
    ZeroCrossing,
    /// Jump when the input enters the band `|e| <= delta` from outside,
    /// moving toward zero. A band of width zero is [`Self::ZeroCrossing`].
    Band { delta: f64 },
}

impl ResetCondition {
    pub fn band(delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "reset band must be nonnegative, got {delta}"
            )));
        }
        if delta == 0.0 {
            Ok(Self::ZeroCrossing)
        } else {
            Ok(Self::Band { delta })
        }
    }

    /// Band width; zero for a plain zero-crossing trigger.
    pub fn delta(&self) -> f64 {
        match self {
            Self::ZeroCrossing => 0.0,
            Self::Band { delta } => *delta,
        }
    }
}

/// A linear controller with a diagonal state-jump map.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetController {
    base: StateSpace,
    a_rho: Vec<f64>,
    condition: ResetCondition,
}

impl ResetController {
    /// Wrap a SISO base system with a diagonal jump map (one entry per state,
    /// each in `[-1, 1]`).
    pub fn new(base: StateSpace, a_rho: Vec<f64>, condition: ResetCondition) -> Result<Self> {
        if !base.is_siso() {
            return Err(Error::Dimension(format!(
                "reset controller base must be SISO, got {} inputs and {} outputs",
                base.n_inputs(),
                base.n_outputs()
            )));
        }
        if a_rho.len() != base.order() {
            return Err(Error::Dimension(format!(
                "jump map has {} entries but the base has {} states",
                a_rho.len(),
                base.order()
            )));
        }
        for (i, g) in a_rho.iter().enumerate() {
            if !g.is_finite() || !(-1.0..=1.0).contains(g) {
                return Err(Error::InvalidParameter(format!(
                    "jump entry {i} must be in [-1, 1], got {g}"
                )));
            }
        }
        Ok(Self {
            base,
            a_rho,
            condition,
        })
    }

    pub fn base(&self) -> &StateSpace {
        &self.base
    }

    /// Diagonal of the jump map, one entry per state.
    pub fn a_rho(&self) -> &[f64] {
        &self.a_rho
    }

    pub fn condition(&self) -> ResetCondition {
        self.condition
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    /// Indices of states the jump actually changes.
    pub fn reset_indices(&self) -> Vec<usize> {
        self.a_rho
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 1.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// True when the jump map is the identity, i.e. resetting is disabled.
    pub fn is_linear(&self) -> bool {
        self.a_rho.iter().all(|g| *g == 1.0)
    }

    /// Jump map as a dense diagonal matrix.
    pub fn jump_matrix(&self) -> Mat {
        Mat::from_diagonal(&DVector::from_vec(self.a_rho.clone()))
    }

    /// Apply the state jump in place.
    pub fn apply_jump(&self, x: &mut DVector<f64>) {
        for (xi, g) in x.iter_mut().zip(&self.a_rho) {
            *xi *= g;
        }
    }

    /// The controller with resetting disabled: just the base dynamics.
    pub fn base_linear(&self) -> StateSpace {
        self.base.clone()
    }

    /// Same dynamics with the trigger replaced by a band of width `delta`
    /// (zero-crossing when `delta` is zero). Overwrites any previous band.
    pub fn with_band(mut self, delta: f64) -> Result<Self> {
        self.condition = ResetCondition::band(delta)?;
        Ok(self)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || !(-1.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "reset value must be in [-1, 1], got {gamma}"
        )));
    }
    Ok(())
}

/// Clegg integrator: an integrator whose state is scaled by `gamma` at each
/// zero crossing of the input.
pub fn make_clegg(gamma: f64) -> Result<ResetController> {
    check_gamma(gamma)?;
    ResetController::new(
        StateSpace::integrator(),
        vec![gamma],
        ResetCondition::ZeroCrossing,
    )
}

/// First-order reset element: a low-pass at `omega_r` rad/s whose state is
/// scaled by `gamma` at each zero crossing.
pub fn make_fore(omega_r: f64, gamma: f64) -> Result<ResetController> {
    check_gamma(gamma)?;
    ResetController::new(
        StateSpace::first_order_lpf(omega_r)?,
        vec![gamma],
        ResetCondition::ZeroCrossing,
    )
}

/// Second-order reset element: unit-gain resonance at `omega_r` rad/s with
/// damping `beta_r`; both states are scaled by `gamma` at each zero crossing.
pub fn make_sore(omega_r: f64, beta_r: f64, gamma: f64) -> Result<ResetController> {
    check_gamma(gamma)?;
    if !(omega_r > 0.0) || !omega_r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "corner frequency must be positive, got {omega_r}"
        )));
    }
    if !(beta_r >= 0.0) || !beta_r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "damping must be nonnegative, got {beta_r}"
        )));
    }
    let w2 = omega_r * omega_r;
    let base = StateSpace::new(
        Mat::from_row_slice(2, 2, &[0.0, 1.0, -w2, -2.0 * beta_r * omega_r]),
        Mat::from_row_slice(2, 1, &[0.0, w2]),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        Mat::zeros(1, 1),
    )?;
    ResetController::new(base, vec![gamma, gamma], ResetCondition::ZeroCrossing)
}

/// Constant-gain lead-phase element: a resetting first-order filter at
/// `omega_ra` in series with a lead from `omega_r` to `omega_f`. Only the
/// filter state (index 0) resets; the lead state passes through linearly.
///
/// With resetting disabled the transfer is
/// `(s/omega_r + 1) / ((s/omega_ra + 1)(s/omega_f + 1))`: near-unity gain
/// between `omega_r` and well below `omega_f`, while the reset action removes
/// most of the filter's phase lag.
pub fn make_cglp(omega_ra: f64, omega_r: f64, omega_f: f64, gamma: f64) -> Result<ResetController> {
    check_gamma(gamma)?;
    for (name, w) in [
        ("filter corner", omega_ra),
        ("lead zero", omega_r),
        ("lead pole", omega_f),
    ] {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {w}"
            )));
        }
    }
    if !(omega_ra <= omega_r && omega_r < omega_f) {
        return Err(Error::InvalidParameter(format!(
            "corners must satisfy filter <= lead zero < lead pole, \
             got {omega_ra}, {omega_r}, {omega_f}"
        )));
    }
    let base = StateSpace::new(
        Mat::from_row_slice(2, 2, &[-omega_ra, 0.0, omega_f, -omega_f]),
        Mat::from_row_slice(2, 1, &[omega_ra, 0.0]),
        Mat::from_row_slice(1, 2, &[omega_f / omega_r, 1.0 - omega_f / omega_r]),
        Mat::zeros(1, 1),
    )?;
    ResetController::new(base, vec![gamma, 1.0], ResetCondition::ZeroCrossing)
}

/// Parameters for [`make_cglp_pid`]: a PID whose derivative action is
/// augmented by a constant-gain lead-phase reset element.
///
/// The corner frequencies follow the usual loop-shaping ordering around the
/// target crossover `omega_c`:
/// `omega_i < omega_d < omega_c < omega_t < omega_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgLpPidParams {
    /// Loop gain.
    pub k: f64,
    /// Target crossover, rad/s.
    pub omega_c: f64,
    /// Integrator corner, rad/s.
    pub omega_i: f64,
    /// Lead zero of the derivative action, rad/s.
    pub omega_d: f64,
    /// Lead pole of the derivative action, rad/s.
    pub omega_t: f64,
    /// Resetting filter corner, rad/s.
    pub omega_ra: f64,
    /// Lead zero of the reset block, rad/s.
    pub omega_r: f64,
    /// Lead pole of the reset block, rad/s.
    pub omega_f: f64,
    /// Jump gain of the resetting filter state, in [-1, 1].
    pub gamma: f64,
}

impl CgLpPidParams {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("omega_c", self.omega_c),
            ("omega_i", self.omega_i),
            ("omega_d", self.omega_d),
            ("omega_t", self.omega_t),
            ("omega_ra", self.omega_ra),
            ("omega_r", self.omega_r),
            ("omega_f", self.omega_f),
        ] {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {w}"
                )));
            }
        }
        if !self.k.is_finite() || self.k == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gain must be nonzero, got {}",
                self.k
            )));
        }
        if !(self.omega_i < self.omega_d
            && self.omega_d < self.omega_c
            && self.omega_c < self.omega_t
            && self.omega_t < self.omega_f)
        {
            return Err(Error::InvalidParameter(format!(
                "corner ordering must be omega_i < omega_d < omega_c < omega_t < omega_f, \
                 got {}, {}, {}, {}, {}",
                self.omega_i, self.omega_d, self.omega_c, self.omega_t, self.omega_f
            )));
        }
        check_gamma(self.gamma)
    }
}

/// Index of the resetting state in a [`make_cglp_pid`] controller.
///
/// The composite state layout is fixed: `[pi, lead, cglp filter, cglp lead]`,
/// so the resetting filter state always sits at index 2.
pub const CGLP_PID_RESET_STATE: usize = 2;

/// PID with a reset lead block:
/// gain and PI action, a lead for the derivative action, then a constant-gain
/// lead-phase reset element.
///
/// The jump map is the identity except for the reset block's filter state
/// ([`CGLP_PID_RESET_STATE`]), which carries `gamma`.
pub fn make_cglp_pid(p: &CgLpPidParams) -> Result<ResetController> {
    p.validate()?;

    // K (1 + omega_i / s): one integrator state, direct feedthrough K.
    let pi = StateSpace::new(
        Mat::zeros(1, 1),
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, p.k * p.omega_i),
        Mat::from_element(1, 1, p.k),
    )?;
    let lead = StateSpace::lead(p.omega_d, p.omega_t)?;
    let cglp = make_cglp(p.omega_ra, p.omega_r, p.omega_f, p.gamma)?;

    let linear_part = series(&pi, &lead)?;
    let base = series(&linear_part, cglp.base())?;

    let mut a_rho = vec![1.0; base.order()];
    a_rho[CGLP_PID_RESET_STATE] = p.gamma;
    ResetController::new(base, a_rho, ResetCondition::ZeroCrossing)
}
