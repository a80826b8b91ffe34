//! Experiment dispatch: builds library objects from a validated config,
//! runs the requested experiment, and writes CSV results plus a manifest.

use crate::config::{ExperimentConfig, ExperimentKind};
use reset_control::df::sidf_band;
use reset_control::sim::{simulate, sigma_sensitivity, NoiseSpec, Quantizer, ReferenceSignal};
use reset_control::stability::{default_grid, hbeta_response, search_hbeta};
use reset_control::tuning::{delta_bound, tune_delta, verify_no_reset, DeltaTuningSpec};
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Failure classes, in exit-code order.
#[derive(Debug)]
pub enum RunError {
    /// Exit 2: the config cannot produce a runnable experiment.
    Config(String),
    /// Exit 3: a simulation diverged.
    Divergence(String),
    /// Exit 4: `--require-stable` and no certificate was found.
    NoCertificate,
    /// Exit 1: filesystem trouble.
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => 1,
            RunError::Config(_) => 2,
            RunError::Divergence(_) => 3,
            RunError::NoCertificate => 4,
        }
    }

    /// One-line machine-parsable diagnostic.
    pub fn diagnostic(&self) -> String {
        match self {
            RunError::Io(m) => format!("error: io: {m}"),
            RunError::Config(m) => format!("error: config: {m}"),
            RunError::Divergence(m) => format!("error: divergence: {m}"),
            RunError::NoCertificate => {
                "error: stability: no certificate found and --require-stable is set".into()
            }
        }
    }
}

fn classify(e: reset_control::Error) -> RunError {
    match e {
        reset_control::Error::Divergence { time } => {
            RunError::Divergence(format!("state left the divergence cap at t={time}"))
        }
        other => RunError::Config(other.to_string()),
    }
}

fn io_err(e: std::io::Error, what: &str) -> RunError {
    RunError::Io(format!("{what}: {e}"))
}

pub struct RunReport {
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

struct Built {
    plant: reset_control::linear::StateSpace,
    controller: reset_control::elements::ResetController,
    quantizer: Quantizer,
    reference: Option<ReferenceSignal>,
    noise: NoiseSpec,
    sim: reset_control::sim::SimConfig,
}

fn build(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Built, RunError> {
    Ok(Built {
        plant: cfg.plant.build().map_err(classify)?,
        controller: cfg.build_controller().map_err(classify)?,
        quantizer: cfg.build_quantizer().map_err(classify)?,
        reference: cfg.build_reference().map_err(classify)?,
        noise: cfg.build_noise(seed).0,
        sim: cfg.build_sim().map_err(classify)?,
    })
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), RunError> {
    fs::write(dir.join(name), body).map_err(|e| io_err(e, name))
}

/// Runs the configured experiment and writes its artifacts into `out_dir`.
pub fn execute(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed: Option<u64>,
    require_stable: bool,
) -> Result<RunReport, RunError> {
    let started = Instant::now();
    fs::create_dir_all(out_dir).map_err(|e| io_err(e, "output directory"))?;
    let built = build(cfg, seed)?;

    let mut outputs = Vec::new();
    let mut summary = json!({});

    match &cfg.experiment {
        ExperimentKind::TimeResponse => {
            let reference = built
                .reference
                .as_ref()
                .ok_or_else(|| RunError::Config("time-response needs a reference".into()))?;
            let trace = simulate(
                &built.plant,
                &built.controller,
                &built.quantizer,
                reference,
                &built.noise,
                &built.sim,
            )
            .map_err(classify)?;
            let mut body = Vec::new();
            trace
                .write_csv(&mut body)
                .map_err(|e| io_err(e, "trace.csv"))?;
            write_file(out_dir, "trace.csv", std::str::from_utf8(&body).unwrap())?;
            outputs.push("trace.csv".into());
            let total = built.sim.duration_seconds(reference);
            let t0 = built.sim.steady_start(total);
            summary = json!({
                "samples": trace.len(),
                "resets": trace.reset_count(),
                "steady_resets": trace.reset_count_in_window(t0, total).map_err(classify)?,
                "steady_max_abs_error": trace.max_abs_error_in(t0, total).map_err(classify)?,
            });
        }

        ExperimentKind::SSigma {
            omega_grid,
            amplitude,
        } => {
            let curve = sigma_sensitivity(
                &built.plant,
                &built.controller,
                &built.quantizer,
                &built.noise,
                &built.sim,
                omega_grid,
                *amplitude,
            )
            .map_err(classify)?;
            let mut body = Vec::new();
            curve
                .write_csv(&mut body)
                .map_err(|e| io_err(e, "s_sigma.csv"))?;
            write_file(out_dir, "s_sigma.csv", std::str::from_utf8(&body).unwrap())?;
            outputs.push("s_sigma.csv".into());
            let diverged = curve.points.iter().filter(|p| p.s_sigma.is_none()).count();
            summary = json!({ "points": curve.points.len(), "diverged_points": diverged });
            if diverged > 0 {
                return Err(RunError::Divergence(format!(
                    "{diverged} sweep points diverged; see s_sigma.csv"
                )));
            }
        }

        ExperimentKind::DfBode {
            omega_grid,
            amplitude,
            delta,
        } => {
            let band = delta.or(cfg.controller.delta).unwrap_or(0.0);
            let mut body = String::from("omega,re,im\n");
            for &w in omega_grid {
                let g = sidf_band(&built.controller, w, *amplitude, band).map_err(classify)?;
                body.push_str(&format!("{:.11e},{:.11e},{:.11e}\n", w, g.re, g.im));
            }
            write_file(out_dir, "df.csv", &body)?;
            outputs.push("df.csv".into());
            summary = json!({ "points": omega_grid.len(), "delta": band });
        }

        ExperimentKind::TuneDelta {
            omega_s,
            k,
            noise_margin,
        } => {
            let reference = built
                .reference
                .clone()
                .ok_or_else(|| RunError::Config("tune-delta needs a reference".into()))?;
            let spec = DeltaTuningSpec {
                omega_s: *omega_s,
                reference,
                q: built.quantizer.level(),
                k: *k,
                noise_margin: noise_margin.unwrap_or_else(|| built.noise.amplitude()),
            };
            let delta = tune_delta(&built.plant, &built.controller, &spec).map_err(classify)?;
            let unscaled = DeltaTuningSpec { k: 1.0, ..spec.clone() };
            let raw =
                delta_bound(&built.plant, &built.controller, &unscaled).map_err(classify)?;
            let verdict =
                verify_no_reset(&built.plant, &built.controller, &built.quantizer, &spec, delta)
                    .map_err(classify)?;
            let mut body = String::from("name,value\n");
            body.push_str(&format!("delta,{delta:.11e}\n"));
            body.push_str(&format!("delta_raw,{raw:.11e}\n"));
            body.push_str(&format!("omega_s,{omega_s:.11e}\n"));
            body.push_str(&format!("k,{k:.11e}\n"));
            body.push_str(&format!("verified,{}\n", u8::from(verdict.ok)));
            write_file(out_dir, "tune_delta.csv", &body)?;
            outputs.push("tune_delta.csv".into());
            let mut runs = String::from("omega,amplitude,resets,max_abs_error\n");
            for r in &verdict.runs {
                runs.push_str(&format!(
                    "{:.11e},{:.11e},{},{:.11e}\n",
                    r.omega, r.amplitude, r.resets, r.max_abs_error
                ));
            }
            write_file(out_dir, "verify_runs.csv", &runs)?;
            outputs.push("verify_runs.csv".into());
            summary = json!({
                "delta": delta,
                "delta_raw": raw,
                "verified": verdict.ok,
                "verify_runs": verdict.runs.len(),
            });
        }

        ExperimentKind::StabilityCheck { omega_grid } => {
            let grid = omega_grid.clone().unwrap_or_else(default_grid);
            let cert =
                search_hbeta(&built.plant, &built.controller, &grid).map_err(classify)?;
            match &cert {
                Some(cert) => {
                    let mut body = String::from("omega,value\n");
                    for &w in &cert.freq_grid {
                        if cert.skipped.contains(&w) {
                            continue;
                        }
                        let h = hbeta_response(
                            &built.plant,
                            &built.controller,
                            &cert.beta,
                            &cert.p_rho,
                            w,
                        )
                        .map_err(classify)?;
                        let margin = reset_control::linear::hermitian_part_min_eig(&h);
                        body.push_str(&format!("{:.11e},{:.11e}\n", w, margin));
                    }
                    write_file(out_dir, "stability.csv", &body)?;
                    outputs.push("stability.csv".into());
                    summary = json!({
                        "certificate_found": true,
                        "min_real_margin": cert.min_real_margin,
                        "beta": cert.beta,
                        "hurwitz_ok": cert.hurwitz_ok,
                        "partial_ok": cert.partial_ok,
                        "skipped_frequencies": cert.skipped,
                    });
                }
                None => {
                    summary = json!({ "certificate_found": false });
                    if require_stable {
                        write_manifest(cfg, out_dir, seed, started, &outputs, &summary)?;
                        return Err(RunError::NoCertificate);
                    }
                }
            }
        }

        ExperimentKind::DeltaSweep {
            omega,
            amplitude,
            deltas,
        } => {
            let reference =
                ReferenceSignal::sine(*amplitude, *omega).map_err(classify)?;
            let total = built.sim.duration_seconds(&reference);
            let t0 = built.sim.steady_start(total);
            let mut body = String::from("delta,S_sigma\n");
            for &delta in deltas {
                let banded = built
                    .controller
                    .clone()
                    .with_band(delta)
                    .map_err(classify)?;
                let trace = simulate(
                    &built.plant,
                    &banded,
                    &built.quantizer,
                    &reference,
                    &built.noise,
                    &built.sim,
                )
                .map_err(classify)?;
                let s_sigma =
                    trace.max_abs_error_in(t0, total).map_err(classify)? / amplitude;
                body.push_str(&format!("{:.11e},{:.11e}\n", delta, s_sigma));
            }
            write_file(out_dir, "delta_sweep.csv", &body)?;
            outputs.push("delta_sweep.csv".into());
            summary = json!({ "points": deltas.len(), "omega": omega });
        }
    }

    write_manifest(cfg, out_dir, seed, started, &outputs, &summary)?;
    Ok(RunReport { outputs, summary })
}

fn write_manifest(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed: Option<u64>,
    started: Instant,
    outputs: &[String],
    summary: &serde_json::Value,
) -> Result<(), RunError> {
    let echo = cfg.with_effective_seed(seed);
    let (_, effective_seed) = cfg.build_noise(seed);
    let manifest = json!({
        "tool": "resetctl",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": effective_seed,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": outputs,
        "summary": summary,
        "config": serde_json::to_value(&echo)
            .map_err(|e| RunError::Io(format!("manifest encode: {e}")))?,
    });
    let file = fs::File::create(out_dir.join("manifest.json"))
        .map_err(|e| io_err(e, "manifest.json"))?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &manifest)
        .map_err(|e| RunError::Io(format!("manifest encode: {e}")))?;
    writer
        .write_all(b"\n")
        .map_err(|e| io_err(e, "manifest.json"))?;
    Ok(())
}
