//! Sampled closed-loop simulator with a quantizing sensor.
//!
//! Loop topology per controller sample: the plant output is measured, noise
//! is added, the sensor quantizes, the error `e = r - y_q` is formed, the
//! reset trigger is evaluated on consecutive error samples (the jump is
//! applied before the flow update), the controller advances one bilinear
//! step, and the plant integrates the held control input with several exact
//! zero-order-hold substeps.
//!
//! The controller uses the trapezoid-state bilinear form
//! `x[k] = Ad x[k-1] + (T/2) M B (e[k-1] + e[k])`, `u[k] = C x[k] + D e[k]`,
//! which has the standard Tustin transfer function while keeping `x` in the
//! controller's own coordinates, so the jump map acts on the intended states.

use std::f64::consts::PI;
use std::io::Write as IoWrite;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::elements::{ResetCondition, ResetController};
use crate::error::{Error, Result};
use crate::linear::{c2d_tustin, c2d_zoh, StateSpace};

// ---------------------------------------------------------------------------
// quantizer
// ---------------------------------------------------------------------------

/// Sensor quantization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizerMode {
    /// Pass the value through unchanged.
    None,
    /// Snap to the nearest level, ties away from zero.
    Rounding,
    /// Snap toward negative infinity.
    Truncation,
}

/// Uniform quantizer with level spacing `q` in output units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    mode: QuantizerMode,
    q: f64,
}

impl Quantizer {
    pub fn none() -> Self {
        Self {
            mode: QuantizerMode::None,
            q: 0.0,
        }
    }

    pub fn new(mode: QuantizerMode, q: f64) -> Result<Self> {
        if mode != QuantizerMode::None && (!(q > 0.0) || !q.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "quantization level must be positive, got {q}"
            )));
        }
        Ok(Self { mode, q })
    }

    /// Level spacing from a full-scale range and a bit count:
    /// `q = range / 2^bits`.
    pub fn from_range_bits(mode: QuantizerMode, range: f64, bits: u32) -> Result<Self> {
        if !(range > 0.0) || !range.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "range must be positive, got {range}"
            )));
        }
        if bits == 0 || bits > 52 {
            return Err(Error::InvalidParameter(format!(
                "bit count must be in 1..=52, got {bits}"
            )));
        }
        Self::new(mode, range / 2f64.powi(bits as i32))
    }

    pub fn mode(&self) -> QuantizerMode {
        self.mode
    }

    /// Level spacing; zero for the pass-through quantizer.
    pub fn level(&self) -> f64 {
        match self.mode {
            QuantizerMode::None => 0.0,
            _ => self.q,
        }
    }

    pub fn quantize(&self, v: f64) -> f64 {
        match self.mode {
            QuantizerMode::None => v,
            QuantizerMode::Rounding => self.q * (v / self.q).round(),
            QuantizerMode::Truncation => self.q * (v / self.q).floor(),
        }
    }
}

// ---------------------------------------------------------------------------
// reference, noise, config
// ---------------------------------------------------------------------------

/// One sinusoidal component of a reference signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineComponent {
    /// Peak amplitude, output units.
    pub amplitude: f64,
    /// Frequency, rad/s.
    pub frequency: f64,
    /// Phase offset, rad.
    pub phase: f64,
}

/// Sum-of-sines reference `r(t) = sum A_i sin(w_i t + p_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    components: Vec<SineComponent>,
}

impl ReferenceSignal {
    pub fn new(components: Vec<SineComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter(
                "reference needs at least one component".into(),
            ));
        }
        for c in &components {
            if !(c.amplitude >= 0.0) || !c.amplitude.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "component amplitude must be nonnegative, got {}",
                    c.amplitude
                )));
            }
            if !(c.frequency > 0.0) || !c.frequency.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "component frequency must be positive, got {}",
                    c.frequency
                )));
            }
            if !c.phase.is_finite() {
                return Err(Error::NonFinite("component phase".into()));
            }
        }
        Ok(Self { components })
    }

    /// Single sine `amplitude * sin(frequency t)`.
    pub fn sine(amplitude: f64, frequency: f64) -> Result<Self> {
        Self::new(vec![SineComponent {
            amplitude,
            frequency,
            phase: 0.0,
        }])
    }

    /// The zero reference (a zero-amplitude unit-frequency sine).
    pub fn zero() -> Self {
        Self {
            components: vec![SineComponent {
                amplitude: 0.0,
                frequency: 1.0,
                phase: 0.0,
            }],
        }
    }

    pub fn components(&self) -> &[SineComponent] {
        &self.components
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.amplitude * (c.frequency * t + c.phase).sin())
            .sum()
    }

    /// Period of the slowest component, s.
    pub fn slowest_period(&self) -> f64 {
        let w_min = self
            .components
            .iter()
            .map(|c| c.frequency)
            .fold(f64::INFINITY, f64::min);
        2.0 * PI / w_min
    }

    /// Sum of component amplitudes (a bound on `|r|`).
    pub fn amplitude_sum(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude).sum()
    }
}

/// Measurement-noise model: seeded uniform white noise added to the plant
/// output ahead of the quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    None,
    UniformWhite { amplitude: f64, seed: u64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if let Self::UniformWhite { amplitude, .. } = self {
            if !(*amplitude >= 0.0) || !amplitude.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "noise amplitude must be nonnegative, got {amplitude}"
                )));
            }
        }
        Ok(())
    }

    /// Peak noise amplitude (zero when disabled).
    pub fn amplitude(&self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::UniformWhite { amplitude, .. } => *amplitude,
        }
    }

    /// Same noise model with the seed replaced (used by parallel sweeps to
    /// decorrelate grid points deterministically).
    pub fn with_seed_offset(&self, offset: u64) -> Self {
        match self {
            Self::None => Self::None,
            Self::UniformWhite { amplitude, seed } => Self::UniformWhite {
                amplitude: *amplitude,
                seed: seed.wrapping_add(offset),
            },
        }
    }
}

enum NoiseGen {
    Silent,
    Uniform { rng: ChaCha8Rng, amplitude: f64 },
}

impl NoiseGen {
    fn new(spec: &NoiseSpec) -> Self {
        match spec {
            NoiseSpec::None => Self::Silent,
            NoiseSpec::UniformWhite { amplitude, seed } => {
                if *amplitude == 0.0 {
                    Self::Silent
                } else {
                    Self::Uniform {
                        rng: ChaCha8Rng::seed_from_u64(*seed),
                        amplitude: *amplitude,
                    }
                }
            }
        }
    }

    fn next(&mut self) -> f64 {
        match self {
            Self::Silent => 0.0,
            Self::Uniform { rng, amplitude } => *amplitude * (2.0 * rng.gen::<f64>() - 1.0),
        }
    }
}

/// Run length: an explicit time, or periods of the slowest reference
/// component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunDuration {
    Seconds(f64),
    Periods(u32),
}

/// Sampling and windowing configuration for a simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Controller sample rate, Hz.
    pub sample_rate_hz: f64,
    /// Exact-hold plant substeps per controller sample.
    pub substeps: u32,
    /// Run length.
    pub duration: RunDuration,
    /// Fraction of the run treated as transient by steady-state analyses.
    pub transient_discard: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        match self.duration {
            RunDuration::Seconds(s) if !(s > 0.0) || !s.is_finite() => {
                return Err(Error::InvalidParameter(format!(
                    "duration must be positive, got {s} s"
                )));
            }
            RunDuration::Periods(0) => {
                return Err(Error::InvalidParameter(
                    "duration must be at least one period".into(),
                ));
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.transient_discard) {
            return Err(Error::InvalidParameter(format!(
                "transient discard must be in [0, 1), got {}",
                self.transient_discard
            )));
        }
        Ok(())
    }

    pub fn duration_seconds(&self, reference: &ReferenceSignal) -> f64 {
        match self.duration {
            RunDuration::Seconds(s) => s,
            RunDuration::Periods(n) => n as f64 * reference.slowest_period(),
        }
    }

    /// Time at which the steady-state window opens for a run of `total` s.
    pub fn steady_start(&self, total: f64) -> f64 {
        self.transient_discard * total
    }
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

/// Per-sample record of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub e: Vec<f64>,
    pub y: Vec<f64>,
    pub y_q: Vec<f64>,
    pub u: Vec<f64>,
    /// 1 at samples where the reset trigger fired.
    pub reset: Vec<bool>,
    pub reset_times: Vec<f64>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn reset_count(&self) -> usize {
        self.reset_times.len()
    }

    fn check_window(&self, t0: f64, t1: f64) -> Result<()> {
        if self.t.is_empty() {
            return Err(Error::WindowOutOfRange("trace is empty".into()));
        }
        let (lo, hi) = (self.t[0], *self.t.last().unwrap());
        if !(t0 < t1) {
            return Err(Error::WindowOutOfRange(format!(
                "window [{t0}, {t1}] is not increasing"
            )));
        }
        if t0 < lo - 1e-12 || t1 > hi + 1e-12 {
            return Err(Error::WindowOutOfRange(format!(
                "window [{t0}, {t1}] outside trace [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Number of reset events with `t0 <= time <= t1`.
    pub fn reset_count_in_window(&self, t0: f64, t1: f64) -> Result<usize> {
        self.check_window(t0, t1)?;
        Ok(self
            .reset_times
            .iter()
            .filter(|&&rt| rt >= t0 && rt <= t1)
            .count())
    }

    /// Largest `|e|` over samples with `t0 <= t <= t1`.
    pub fn max_abs_error_in(&self, t0: f64, t1: f64) -> Result<f64> {
        self.check_window(t0, t1)?;
        Ok(self
            .t
            .iter()
            .zip(&self.e)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(_, e)| e.abs())
            .fold(0.0, f64::max))
    }

    /// CSV export with 12 significant digits:
    /// `t,r,e,y,y_q,u,reset`.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,r,e,y,y_q,u,reset")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{}",
                self.t[i],
                self.r[i],
                self.e[i],
                self.y[i],
                self.y_q[i],
                self.u[i],
                self.reset[i] as u8
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// core loop
// ---------------------------------------------------------------------------

/// Trapezoid-state bilinear controller step (see module docs).
struct TrapController {
    ad: nalgebra::DMatrix<f64>,
    half_b: DVector<f64>,
    c: DVector<f64>,
    d: f64,
}

impl TrapController {
    fn new(sys: &StateSpace, period: f64) -> Result<Self> {
        let disc = c2d_tustin(sys, period)?;
        let n = sys.order();
        Ok(Self {
            ad: disc.ad,
            half_b: DVector::from_fn(n, |i, _| 0.5 * disc.bd[(i, 0)]),
            c: DVector::from_fn(n, |i, _| sys.c()[(0, i)]),
            d: sys.d()[(0, 0)],
        })
    }
}

/// Signal magnitude treated as divergence (also catches NaN through the
/// negated comparison).
const DIVERGENCE_CAP: f64 = 1e150;

fn triggered(cond: ResetCondition, e_prev: f64, e_now: f64) -> bool {
    match cond {
        ResetCondition::ZeroCrossing => e_prev * e_now <= 0.0 && e_prev != 0.0,
        ResetCondition::Band { delta } => {
            (e_prev > delta && e_now <= delta) || (e_prev < -delta && e_now >= -delta)
        }
    }
}

trait Recorder {
    fn record(&mut self, t: f64, r: f64, e: f64, y: f64, y_q: f64, u: f64, reset: bool);
}

struct FullRecorder(SimulationTrace);

impl Recorder for FullRecorder {
    fn record(&mut self, t: f64, r: f64, e: f64, y: f64, y_q: f64, u: f64, reset: bool) {
        let tr = &mut self.0;
        tr.t.push(t);
        tr.r.push(r);
        tr.e.push(e);
        tr.y.push(y);
        tr.y_q.push(y_q);
        tr.u.push(u);
        tr.reset.push(reset);
        if reset {
            tr.reset_times.push(t);
        }
    }
}

/// Streaming recorder for sensitivity sweeps: tracks the global and
/// per-period error maxima over the retained window without storing samples.
struct ErrorEnvelope {
    retain_from: f64,
    period: f64,
    max_abs_e: f64,
    per_period: Vec<f64>,
}

impl ErrorEnvelope {
    fn new(retain_from: f64, period: f64) -> Self {
        Self {
            retain_from,
            period,
            max_abs_e: 0.0,
            per_period: Vec::new(),
        }
    }

    /// Maxima of the last two complete periods, when available.
    fn last_two_periods(&self) -> Option<(f64, f64)> {
        // the final entry may cover a partial period; use the two before it
        let n = self.per_period.len();
        if n >= 3 {
            Some((self.per_period[n - 3], self.per_period[n - 2]))
        } else {
            None
        }
    }
}

impl Recorder for ErrorEnvelope {
    fn record(&mut self, t: f64, _r: f64, e: f64, _y: f64, _y_q: f64, _u: f64, _reset: bool) {
        if t < self.retain_from {
            return;
        }
        let a = e.abs();
        self.max_abs_e = self.max_abs_e.max(a);
        let idx = ((t - self.retain_from) / self.period) as usize;
        if idx >= self.per_period.len() {
            self.per_period.resize(idx + 1, 0.0);
        }
        self.per_period[idx] = self.per_period[idx].max(a);
    }
}

struct LoopSetup {
    plant_ad: nalgebra::DMatrix<f64>,
    plant_b: DVector<f64>,
    plant_c: DVector<f64>,
    controller: TrapController,
    period: f64,
    n_samples: usize,
}

fn prepare(
    plant: &StateSpace,
    rc: &ResetController,
    cfg: &SimConfig,
    duration: f64,
) -> Result<LoopSetup> {
    cfg.validate()?;
    if !plant.is_siso() {
        return Err(Error::Dimension("plant must be SISO".into()));
    }
    if !plant.is_strictly_proper() {
        return Err(Error::AlgebraicLoop);
    }
    let period = 1.0 / cfg.sample_rate_hz;
    let sub = c2d_zoh(plant, period / cfg.substeps as f64)?;
    let np = plant.order();
    Ok(LoopSetup {
        plant_ad: sub.ad,
        plant_b: DVector::from_fn(np, |i, _| sub.bd[(i, 0)]),
        plant_c: DVector::from_fn(np, |i, _| plant.c()[(0, i)]),
        controller: TrapController::new(rc.base(), period)?,
        period,
        n_samples: (duration * cfg.sample_rate_hz).ceil() as usize + 1,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_loop<R: Recorder>(
    setup: &LoopSetup,
    rc: &ResetController,
    quantizer: &Quantizer,
    reference: &ReferenceSignal,
    noise: &NoiseSpec,
    cfg: &SimConfig,
    x_plant0: &DVector<f64>,
    x_controller0: &DVector<f64>,
    rec: &mut R,
) -> Result<()> {
    let mut noise_gen = NoiseGen::new(noise);
    let mut x_p = x_plant0.clone();
    let mut x_r = x_controller0.clone();
    let np = x_p.len();
    let nr = x_r.len();
    let mut buf_p = DVector::<f64>::zeros(np);
    let mut buf_r = DVector::<f64>::zeros(nr);
    let mut e_prev = 0.0;

    for k in 0..setup.n_samples {
        let t = k as f64 * setup.period;
        let r = reference.eval(t);
        let y = setup.plant_c.dot(&x_p);
        let y_q = quantizer.quantize(y + noise_gen.next());
        let e = r - y_q;

        let reset = k > 0 && triggered(rc.condition(), e_prev, e);
        if reset {
            rc.apply_jump(&mut x_r);
        }

        if k > 0 && nr > 0 {
            // x <- Ad x + (T/2) M B (e_prev + e)
            buf_r.gemv(1.0, &setup.controller.ad, &x_r, 0.0);
            buf_r.axpy(e_prev + e, &setup.controller.half_b, 1.0);
            std::mem::swap(&mut x_r, &mut buf_r);
        }
        let u = setup.controller.c.dot(&x_r) + setup.controller.d * e;

        // report runaway loops before they overflow into infinities
        if !(u.abs() < DIVERGENCE_CAP) || !(e.abs() < DIVERGENCE_CAP) {
            return Err(Error::Divergence { time: t });
        }
        rec.record(t, r, e, y, y_q, u, reset);

        for _ in 0..cfg.substeps {
            buf_p.gemv(1.0, &setup.plant_ad, &x_p, 0.0);
            buf_p.axpy(u, &setup.plant_b, 1.0);
            std::mem::swap(&mut x_p, &mut buf_p);
        }
        if x_p.iter().any(|v| !(v.abs() < DIVERGENCE_CAP)) {
            return Err(Error::Divergence { time: t });
        }
        e_prev = e;
    }
    Ok(())
}

/// Closed-loop run from the origin. See [`simulate_from`] for custom initial
/// states.
pub fn simulate(
    plant: &StateSpace,
    rc: &ResetController,
    quantizer: &Quantizer,
    reference: &ReferenceSignal,
    noise: &NoiseSpec,
    cfg: &SimConfig,
) -> Result<SimulationTrace> {
    let x_p = DVector::zeros(plant.order());
    let x_r = DVector::zeros(rc.order());
    simulate_from(plant, rc, quantizer, reference, noise, cfg, &x_p, &x_r)
}

/// Closed-loop run from given plant and controller initial states.
#[allow(clippy::too_many_arguments)]
pub fn simulate_from(
    plant: &StateSpace,
    rc: &ResetController,
    quantizer: &Quantizer,
    reference: &ReferenceSignal,
    noise: &NoiseSpec,
    cfg: &SimConfig,
    x_plant0: &DVector<f64>,
    x_controller0: &DVector<f64>,
) -> Result<SimulationTrace> {
    noise.validate()?;
    if x_plant0.len() != plant.order() || x_controller0.len() != rc.order() {
        return Err(Error::Dimension(format!(
            "initial states must be {} plant and {} controller entries, got {} and {}",
            plant.order(),
            rc.order(),
            x_plant0.len(),
            x_controller0.len()
        )));
    }
    let duration = cfg.duration_seconds(reference);
    let setup = prepare(plant, rc, cfg, duration)?;
    let mut rec = FullRecorder(SimulationTrace {
        t: Vec::with_capacity(setup.n_samples),
        r: Vec::with_capacity(setup.n_samples),
        e: Vec::with_capacity(setup.n_samples),
        y: Vec::with_capacity(setup.n_samples),
        y_q: Vec::with_capacity(setup.n_samples),
        u: Vec::with_capacity(setup.n_samples),
        reset: Vec::with_capacity(setup.n_samples),
        reset_times: Vec::new(),
    });
    run_loop(
        &setup,
        rc,
        quantizer,
        reference,
        noise,
        cfg,
        x_plant0,
        x_controller0,
        &mut rec,
    )?;
    Ok(rec.0)
}

// ---------------------------------------------------------------------------
// steady-state sensitivity sweep
// ---------------------------------------------------------------------------

/// One point of a steady-state sensitivity curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPoint {
    pub omega: f64,
    /// `max|e| / R` over the retained window; `None` when the run diverged.
    pub s_sigma: Option<f64>,
}

/// Steady-state sensitivity curve `max|e(t)| / R` per reference frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaCurve {
    pub points: Vec<SigmaPoint>,
    /// Reference amplitude the sweep ran with.
    pub amplitude: f64,
}

impl SigmaCurve {
    /// Value at the grid point closest to `omega`.
    pub fn value_near(&self, omega: f64) -> Option<f64> {
        self.points
            .iter()
            .min_by(|a, b| {
                (a.omega - omega)
                    .abs()
                    .partial_cmp(&(b.omega - omega).abs())
                    .unwrap()
            })
            .and_then(|p| p.s_sigma)
    }

    /// CSV export: `omega,s_sigma` (diverged points as `nan`).
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "omega,s_sigma")?;
        for p in &self.points {
            match p.s_sigma {
                Some(v) => writeln!(w, "{:.11e},{:.11e}", p.omega, v)?,
                None => writeln!(w, "{:.11e},nan", p.omega)?,
            }
        }
        Ok(())
    }
}

/// Relative per-period disagreement above which a sweep point is considered
/// unsettled and its run extended.
const PERIODICITY_TOL: f64 = 0.02;

fn sigma_point(
    plant: &StateSpace,
    rc: &ResetController,
    quantizer: &Quantizer,
    noise: &NoiseSpec,
    cfg: &SimConfig,
    omega: f64,
    amplitude: f64,
) -> Result<Option<f64>> {
    let reference = ReferenceSignal::sine(amplitude, omega)?;
    let period = 2.0 * PI / omega;
    let base_duration = (20.0 * period).max(2.0);

    let mut result = None;
    // extend the run when consecutive periods still disagree
    for extend in 1..=3u32 {
        let duration = base_duration * extend as f64;
        let setup = prepare(plant, rc, cfg, duration)?;
        let mut env = ErrorEnvelope::new(cfg.steady_start(duration), period);
        let x_p = DVector::zeros(plant.order());
        let x_r = DVector::zeros(rc.order());
        match run_loop(
            &setup, rc, quantizer, &reference, noise, cfg, &x_p, &x_r, &mut env,
        ) {
            Ok(()) => {}
            Err(Error::Divergence { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
        result = Some(env.max_abs_e / amplitude);
        match env.last_two_periods() {
            Some((a, b)) if (a - b).abs() > PERIODICITY_TOL * a.abs().max(b.abs()) => continue,
            _ => break,
        }
    }
    Ok(result)
}

/// Sweep the steady-state sensitivity over a frequency grid.
///
/// Each grid point simulates a single-sine reference of amplitude `amplitude`
/// for `max(20 periods, 2 s)`, discards the configured transient fraction,
/// and reports `max|e| / amplitude`. Runs whose last two retained periods
/// disagree by more than 2% are extended up to three times. Points run in
/// parallel; each gets a deterministic noise seed offset by its grid index,
/// and divergent points are flagged rather than failing the sweep.
pub fn sigma_sensitivity(
    plant: &StateSpace,
    rc: &ResetController,
    quantizer: &Quantizer,
    noise: &NoiseSpec,
    cfg: &SimConfig,
    omega_grid: &[f64],
    amplitude: f64,
) -> Result<SigmaCurve> {
    noise.validate()?;
    cfg.validate()?;
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sweep amplitude must be positive, got {amplitude}"
        )));
    }
    if omega_grid.is_empty() {
        return Err(Error::InvalidParameter("frequency grid is empty".into()));
    }
    for pair in omega_grid.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::InvalidParameter(
                "frequency grid must be strictly increasing".into(),
            ));
        }
    }
    if !(omega_grid[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "frequency grid must be positive".into(),
        ));
    }

    let points: Result<Vec<SigmaPoint>> = omega_grid
        .par_iter()
        .enumerate()
        .map(|(i, &omega)| {
            let point_noise = noise.with_seed_offset(i as u64);
            let s_sigma = sigma_point(plant, rc, quantizer, &point_noise, cfg, omega, amplitude)?;
            Ok(SigmaPoint { omega, s_sigma })
        })
        .collect();
    Ok(SigmaCurve {
        points: points?,
        amplitude,
    })
}
