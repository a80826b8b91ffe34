//! Config-driven experiments on reset-controlled loops.

mod config;
mod run;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use reset_control::tuning::{delta_bound, tune_delta, verify_no_reset, DeltaTuningSpec};
use run::RunError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "resetctl", version, about = "Reset-control experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Directory for CSV results and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Override the noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit 4 when a stability check finds no certificate.
        #[arg(long)]
        require_stable: bool,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Print the tuned reset band for a config.
    TuneDelta { config: PathBuf },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch() -> Result<ExitCode, RunError> {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            out,
            seed,
            require_stable,
        } => {
            let cfg = load(&config)?;
            check(&cfg)?;
            let report = run::execute(&cfg, &out, seed, require_stable)?;
            for name in &report.outputs {
                println!("wrote {}", out.join(name).display());
            }
            println!("wrote {}", out.join("manifest.json").display());
            println!("summary: {}", report.summary);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Validate { config } => {
            let cfg = load(&config)?;
            let violations = cfg.validate();
            let mut errors = 0;
            for v in &violations {
                let severity = if v.warning { "warning" } else { "error" };
                println!("{severity}: {}: {}", v.path, v.message);
                errors += usize::from(!v.warning);
            }
            if errors > 0 {
                eprintln!("error: config: {errors} violation(s) in {}", config.display());
                return Ok(ExitCode::from(2));
            }
            println!("ok");
            Ok(ExitCode::SUCCESS)
        }
        Cmd::TuneDelta { config } => {
            let cfg = load(&config)?;
            check(&cfg)?;
            tune(&cfg)
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

/// Shared semantic gate for run and tune-delta: errors stop the command,
/// warnings go to the diagnostic stream.
fn check(cfg: &ExperimentConfig) -> Result<(), RunError> {
    let violations = cfg.validate();
    let mut errors = Vec::new();
    for v in &violations {
        if v.warning {
            eprintln!("warning: {}: {}", v.path, v.message);
        } else {
            errors.push(format!("{}: {}", v.path, v.message));
        }
    }
    match errors.first() {
        None => Ok(()),
        Some(first) => Err(RunError::Config(format!(
            "{first}{}",
            if errors.len() > 1 {
                format!(" (and {} more)", errors.len() - 1)
            } else {
                String::new()
            }
        ))),
    }
}

fn tune(cfg: &ExperimentConfig) -> Result<ExitCode, RunError> {
    let classify = |e: reset_control::Error| RunError::Config(e.to_string());
    let (omega_s, k, noise_margin) = match &cfg.experiment {
        config::ExperimentKind::TuneDelta {
            omega_s,
            k,
            noise_margin,
        } => (*omega_s, *k, *noise_margin),
        _ => {
            return Err(RunError::Config(
                "tune-delta needs an experiment of kind tune-delta".into(),
            ))
        }
    };
    let plant = cfg.plant.build().map_err(classify)?;
    let controller = cfg.build_controller().map_err(classify)?;
    let quantizer = cfg.build_quantizer().map_err(classify)?;
    let reference = cfg
        .build_reference()
        .map_err(classify)?
        .ok_or_else(|| RunError::Config("tune-delta needs a reference".into()))?;
    let (noise, _) = cfg.build_noise(None);
    let spec = DeltaTuningSpec {
        omega_s,
        reference,
        q: quantizer.level(),
        k,
        noise_margin: noise_margin.unwrap_or_else(|| noise.amplitude()),
    };
    let delta = tune_delta(&plant, &controller, &spec).map_err(classify)?;
    let unscaled = DeltaTuningSpec { k: 1.0, ..spec.clone() };
    let raw = delta_bound(&plant, &controller, &unscaled).map_err(classify)?;
    let verdict =
        verify_no_reset(&plant, &controller, &quantizer, &spec, delta).map_err(classify)?;
    println!("delta,{delta:.11e}");
    println!("delta_raw,{raw:.11e}");
    println!("verified,{}", u8::from(verdict.ok));
    if let Some(run) = verdict.first_violation() {
        eprintln!(
            "warning: verify: {} reset(s) at omega={} amplitude={}",
            run.resets, run.omega, run.amplitude
        );
    }
    Ok(ExitCode::SUCCESS)
}
