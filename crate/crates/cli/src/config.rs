//! JSON experiment configuration: schema, semantic validation with field
//! paths, and construction of the library objects it describes.
//!
//! Units: lengths in meters and frequencies in rad/s, except keys ending in
//! `_hz`, which are in hertz.

use reset_control::elements::{make_cglp_pid, CgLpPidParams, ResetController};
use reset_control::linear::{Mat, StateSpace};
use reset_control::sim::{
    NoiseSpec, Quantizer, QuantizerMode, ReferenceSignal, RunDuration, SimConfig, SineComponent,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub quantizer: QuantizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub sim: SimSection,
    pub experiment: ExperimentKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Mass {
        mass_kg: f64,
    },
    SecondOrder {
        gain: f64,
        damping: f64,
        stiffness: f64,
    },
    CustomSs {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub k: f64,
    pub omega_c: f64,
    pub omega_i: f64,
    pub omega_d: f64,
    pub omega_t: f64,
    pub omega_ra: f64,
    pub omega_r: f64,
    pub omega_f: f64,
    pub gamma: f64,
    /// Reset band in meters; omitted means plain zero-crossing resets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerModeConfig {
    None,
    Rounding,
    Truncation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerConfig {
    pub mode: QuantizerModeConfig,
    /// Sensor range in meters; pairs with `bits`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    /// Explicit level spacing in meters; exclusive with `range`/`bits`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            mode: QuantizerModeConfig::None,
            range: None,
            bits: None,
            level: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub components: Vec<ComponentConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    /// Meters.
    pub amplitude: f64,
    /// Rad/s.
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    UniformWhite {
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub sample_rate_hz: f64,
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    #[serde(default = "default_discard")]
    pub transient_discard: f64,
}

fn default_substeps() -> u32 {
    1
}

fn default_discard() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentKind {
    TimeResponse,
    SSigma {
        omega_grid: Vec<f64>,
        /// Single-sine amplitude applied at every grid point, meters.
        amplitude: f64,
    },
    DfBode {
        omega_grid: Vec<f64>,
        amplitude: f64,
        /// Band used by the describing function; defaults to the
        /// controller's `delta`, then to zero.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
    TuneDelta {
        omega_s: f64,
        #[serde(default = "default_safety")]
        k: f64,
        /// Defaults to the configured noise amplitude.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_margin: Option<f64>,
    },
    StabilityCheck {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega_grid: Option<Vec<f64>>,
    },
    DeltaSweep {
        omega: f64,
        amplitude: f64,
        deltas: Vec<f64>,
    },
}

fn default_safety() -> f64 {
    1.0
}

/// One finding from semantic validation.
#[derive(Debug, Clone)]
pub struct Violation {
    pub path: String,
    pub message: String,
    pub warning: bool,
}

impl Violation {
    fn error(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.to_string(),
            message: message.into(),
            warning: false,
        }
    }

    fn warning(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.to_string(),
            message: message.into(),
            warning: true,
        }
    }
}

fn require_positive(out: &mut Vec<Violation>, path: &str, v: f64) {
    if !(v > 0.0) || !v.is_finite() {
        out.push(Violation::error(path, format!("must be positive, got {v}")));
    }
}

fn check_grid(out: &mut Vec<Violation>, path: &str, grid: &[f64]) {
    if grid.is_empty() {
        out.push(Violation::error(path, "must not be empty"));
        return;
    }
    if grid.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        out.push(Violation::error(path, "entries must be positive and finite"));
    }
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        out.push(Violation::error(path, "entries must be strictly ascending"));
    }
}

impl ExperimentConfig {
    /// Every semantic problem in the file, errors and warnings together.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        match &self.plant {
            PlantConfig::Mass { mass_kg } => require_positive(&mut out, "plant.mass_kg", *mass_kg),
            PlantConfig::SecondOrder {
                gain,
                damping,
                stiffness,
            } => {
                for (name, v) in [
                    ("plant.gain", gain),
                    ("plant.damping", damping),
                    ("plant.stiffness", stiffness),
                ] {
                    if !v.is_finite() {
                        out.push(Violation::error(name, "must be finite"));
                    }
                }
            }
            PlantConfig::CustomSs { .. } => {
                if let Err(e) = self.plant.build() {
                    out.push(Violation::error("plant", e.to_string()));
                }
            }
        }

        let c = &self.controller;
        for (path, v) in [
            ("controller.omega_c", c.omega_c),
            ("controller.omega_i", c.omega_i),
            ("controller.omega_d", c.omega_d),
            ("controller.omega_t", c.omega_t),
            ("controller.omega_ra", c.omega_ra),
            ("controller.omega_r", c.omega_r),
            ("controller.omega_f", c.omega_f),
        ] {
            require_positive(&mut out, path, v);
        }
        if !c.k.is_finite() || c.k == 0.0 {
            out.push(Violation::error(
                "controller.k",
                format!("must be nonzero and finite, got {}", c.k),
            ));
        }
        if !(c.gamma >= -1.0 && c.gamma <= 1.0) {
            out.push(Violation::error(
                "controller.gamma",
                format!("must lie in [-1, 1], got {}", c.gamma),
            ));
        }
        if let Some(d) = c.delta {
            require_positive(&mut out, "controller.delta", d);
        }
        // Catch whatever the per-field checks above do not (corner ordering
        // rules in particular), so a clean validation implies a buildable
        // controller.
        if out.iter().all(|v| !v.path.starts_with("controller")) {
            if let Err(e) = self.build_controller() {
                out.push(Violation::error("controller", e.to_string()));
            }
        }

        let q = &self.quantizer;
        match q.mode {
            QuantizerModeConfig::None => {
                if q.range.is_some() || q.bits.is_some() || q.level.is_some() {
                    out.push(Violation::error(
                        "quantizer",
                        "mode none takes no size fields",
                    ));
                }
            }
            _ => match (q.range, q.bits, q.level) {
                (Some(range), Some(bits), None) => {
                    require_positive(&mut out, "quantizer.range", range);
                    if !(1..=52).contains(&bits) {
                        out.push(Violation::error(
                            "quantizer.bits",
                            format!("must lie in 1..=52, got {bits}"),
                        ));
                    }
                }
                (None, None, Some(level)) => {
                    require_positive(&mut out, "quantizer.level", level)
                }
                _ => out.push(Violation::error(
                    "quantizer",
                    "give either range and bits, or level",
                )),
            },
        }

        if let Some(reference) = &self.reference {
            if reference.components.is_empty() {
                out.push(Violation::error(
                    "reference.components",
                    "must not be empty",
                ));
            }
            for (i, comp) in reference.components.iter().enumerate() {
                if !(comp.amplitude >= 0.0) || !comp.amplitude.is_finite() {
                    out.push(Violation::error(
                        &format!("reference.components[{i}].amplitude"),
                        "must be nonnegative and finite",
                    ));
                }
                require_positive(
                    &mut out,
                    &format!("reference.components[{i}].frequency"),
                    comp.frequency,
                );
                if !comp.phase.is_finite() {
                    out.push(Violation::error(
                        &format!("reference.components[{i}].phase"),
                        "must be finite",
                    ));
                }
            }
        }

        if let NoiseConfig::UniformWhite { amplitude, .. } = &self.noise {
            if !(*amplitude >= 0.0) || !amplitude.is_finite() {
                out.push(Violation::error(
                    "noise.amplitude",
                    "must be nonnegative and finite",
                ));
            }
        }

        let s = &self.sim;
        require_positive(&mut out, "sim.sample_rate_hz", s.sample_rate_hz);
        if s.substeps == 0 {
            out.push(Violation::error("sim.substeps", "must be at least 1"));
        }
        match (s.periods, s.seconds) {
            (Some(p), None) => {
                if p == 0 {
                    out.push(Violation::error("sim.periods", "must be at least 1"));
                }
            }
            (None, Some(t)) => require_positive(&mut out, "sim.seconds", t),
            _ => out.push(Violation::error(
                "sim",
                "give exactly one of periods or seconds",
            )),
        }
        if !(0.0..1.0).contains(&s.transient_discard) {
            out.push(Violation::error(
                "sim.transient_discard",
                format!("must lie in [0, 1), got {}", s.transient_discard),
            ));
        }

        match &self.experiment {
            ExperimentKind::TimeResponse => {
                if self.reference.is_none() {
                    out.push(Violation::error(
                        "reference",
                        "required by the time-response experiment",
                    ));
                }
            }
            ExperimentKind::SSigma {
                omega_grid,
                amplitude,
            } => {
                check_grid(&mut out, "experiment.omega_grid", omega_grid);
                require_positive(&mut out, "experiment.amplitude", *amplitude);
            }
            ExperimentKind::DfBode {
                omega_grid,
                amplitude,
                delta,
            } => {
                check_grid(&mut out, "experiment.omega_grid", omega_grid);
                require_positive(&mut out, "experiment.amplitude", *amplitude);
                if let Some(d) = delta {
                    if !(*d >= 0.0) || !d.is_finite() {
                        out.push(Violation::error(
                            "experiment.delta",
                            "must be nonnegative and finite",
                        ));
                    }
                }
            }
            ExperimentKind::TuneDelta {
                omega_s,
                k,
                noise_margin,
            } => {
                require_positive(&mut out, "experiment.omega_s", *omega_s);
                if !(*k >= 1.0) || !k.is_finite() {
                    out.push(Violation::error(
                        "experiment.k",
                        format!("safety factor must be at least 1, got {k}"),
                    ));
                }
                if let Some(nm) = noise_margin {
                    if !(*nm >= 0.0) || !nm.is_finite() {
                        out.push(Violation::error(
                            "experiment.noise_margin",
                            "must be nonnegative and finite",
                        ));
                    }
                }
                if self.reference.is_none() {
                    out.push(Violation::error(
                        "reference",
                        "required by the tune-delta experiment",
                    ));
                }
            }
            ExperimentKind::StabilityCheck { omega_grid } => {
                if let Some(grid) = omega_grid {
                    check_grid(&mut out, "experiment.omega_grid", grid);
                }
            }
            ExperimentKind::DeltaSweep {
                omega,
                amplitude,
                deltas,
            } => {
                require_positive(&mut out, "experiment.omega", *omega);
                require_positive(&mut out, "experiment.amplitude", *amplitude);
                check_grid(&mut out, "experiment.deltas", deltas);
            }
        }

        // Band-versus-amplitude advisories; only meaningful when both exist.
        if let (Some(delta), Some(reference)) = (c.delta, &self.reference) {
            let e = reference
                .components
                .iter()
                .map(|c| c.amplitude)
                .sum::<f64>();
            if e > 0.0 && delta >= e {
                out.push(Violation::warning(
                    "controller.delta",
                    format!(
                        "band {delta} covers the reference amplitude {e}; resets never \
                         reachable and limit cycling may occur"
                    ),
                ));
            } else if e > 0.0 && delta / e > 0.9 {
                out.push(Violation::warning(
                    "controller.delta",
                    format!(
                        "band is {:.2} of the reference amplitude; describing-function \
                         accuracy degrades above 0.9",
                        delta / e
                    ),
                ));
            }
        }

        out
    }

    pub fn controller_params(&self) -> CgLpPidParams {
        let c = &self.controller;
        CgLpPidParams {
            k: c.k,
            omega_c: c.omega_c,
            omega_i: c.omega_i,
            omega_d: c.omega_d,
            omega_t: c.omega_t,
            omega_ra: c.omega_ra,
            omega_r: c.omega_r,
            omega_f: c.omega_f,
            gamma: c.gamma,
        }
    }

    pub fn build_controller(&self) -> reset_control::Result<ResetController> {
        let rc = make_cglp_pid(&self.controller_params())?;
        match self.controller.delta {
            Some(d) => rc.with_band(d),
            None => Ok(rc),
        }
    }

    pub fn build_quantizer(&self) -> reset_control::Result<Quantizer> {
        let q = &self.quantizer;
        let mode = match q.mode {
            QuantizerModeConfig::None => return Ok(Quantizer::none()),
            QuantizerModeConfig::Rounding => QuantizerMode::Rounding,
            QuantizerModeConfig::Truncation => QuantizerMode::Truncation,
        };
        match (q.range, q.bits, q.level) {
            (Some(range), Some(bits), None) => Quantizer::from_range_bits(mode, range, bits),
            (None, None, Some(level)) => Quantizer::new(mode, level),
            _ => Err(reset_control::Error::InvalidParameter(
                "quantizer needs either range and bits, or level".into(),
            )),
        }
    }

    pub fn build_reference(&self) -> reset_control::Result<Option<ReferenceSignal>> {
        match &self.reference {
            None => Ok(None),
            Some(r) => {
                let components = r
                    .components
                    .iter()
                    .map(|c| SineComponent {
                        amplitude: c.amplitude,
                        frequency: c.frequency,
                        phase: c.phase,
                    })
                    .collect();
                ReferenceSignal::new(components).map(Some)
            }
        }
    }

    /// Noise model with `--seed` folded in; returns the effective seed when
    /// noise is present.
    pub fn build_noise(&self, seed_override: Option<u64>) -> (NoiseSpec, Option<u64>) {
        match &self.noise {
            NoiseConfig::None => (NoiseSpec::None, None),
            NoiseConfig::UniformWhite { amplitude, seed } => {
                let effective = seed_override.or(*seed).unwrap_or(0);
                (
                    NoiseSpec::UniformWhite {
                        amplitude: *amplitude,
                        seed: effective,
                    },
                    Some(effective),
                )
            }
        }
    }

    pub fn build_sim(&self) -> reset_control::Result<SimConfig> {
        let duration = match (self.sim.periods, self.sim.seconds) {
            (Some(p), None) => RunDuration::Periods(p),
            (None, Some(t)) => RunDuration::Seconds(t),
            _ => {
                return Err(reset_control::Error::InvalidParameter(
                    "give exactly one of sim.periods or sim.seconds".into(),
                ))
            }
        };
        let cfg = SimConfig {
            sample_rate_hz: self.sim.sample_rate_hz,
            substeps: self.sim.substeps,
            duration,
            transient_discard: self.sim.transient_discard,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copy of the config with the effective noise seed materialized, for
    /// the manifest echo.
    pub fn with_effective_seed(&self, seed_override: Option<u64>) -> Self {
        let mut echo = self.clone();
        if let NoiseConfig::UniformWhite { amplitude, seed } = &self.noise {
            let effective = seed_override.or(*seed).unwrap_or(0);
            echo.noise = NoiseConfig::UniformWhite {
                amplitude: *amplitude,
                seed: Some(effective),
            };
        }
        echo
    }
}

impl PlantConfig {
    pub fn build(&self) -> reset_control::Result<StateSpace> {
        match self {
            PlantConfig::Mass { mass_kg } => StateSpace::mass(*mass_kg),
            PlantConfig::SecondOrder {
                gain,
                damping,
                stiffness,
            } => StateSpace::second_order(*gain, *damping, *stiffness),
            PlantConfig::CustomSs { a, b, c, d } => {
                let to_mat = |rows: &Vec<Vec<f64>>, name: &str| -> reset_control::Result<Mat> {
                    let nr = rows.len();
                    let nc = rows.first().map_or(0, Vec::len);
                    if rows.iter().any(|r| r.len() != nc) {
                        return Err(reset_control::Error::Dimension(format!(
                            "{name} rows have unequal lengths"
                        )));
                    }
                    Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
                };
                StateSpace::new(
                    to_mat(a, "a")?,
                    to_mat(b, "b")?,
                    to_mat(c, "c")?,
                    to_mat(d, "d")?,
                )
            }
        }
    }
}
