use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nethinf_core::harness::loopshape::LoopShapingSetup;
use nethinf_core::harness::{parse_config_with_base, run_experiment, ConfigOverrides, CONFIG_KEYS};
use nethinf_core::{ExperimentConfig, HarnessError, Preset};

#[derive(Parser, Debug)]
#[command(
    name = "nethinf",
    version,
    about = "Networked adaptive fuzzy H-infinity control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one closed-loop experiment and write trace.csv, metrics.txt and
    /// the final fuzzy parameters into the output directory.
    Simulate {
        /// `key = value` configuration file; omitted keys use preset defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// nominal | networked | stress
        #[arg(long)]
        preset: Option<Preset>,
        /// Simulated horizon in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Print the robustness certificate of the illustrative loop-shaping
    /// setup around the linearized pendulum.
    Margin {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// List every configuration key.
    Keys,
}

fn load_config(
    path: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<ExperimentConfig, HarnessError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| HarnessError::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => String::new(),
    };
    parse_config_with_base(&text, overrides)
}

fn simulate(
    config: Option<&Path>,
    out: &Path,
    overrides: ConfigOverrides,
    quiet: bool,
) -> Result<bool, HarnessError> {
    let cfg = load_config(config, &overrides)?;
    let outcome = run_experiment(&cfg)?;
    outcome.write_outputs(out)?;
    if !quiet {
        print!("{}", outcome.metrics);
        if let Some(reason) = &outcome.trace.abort_reason {
            println!("abort_reason = {reason}");
        }
        println!("wrote {} steps to {}", outcome.trace.len(), out.display());
    }
    Ok(!outcome.metrics.diverged)
}

fn margin(config: Option<&Path>, tol: f64) -> Result<(), HarnessError> {
    let cfg = load_config(config, &ConfigOverrides::default())?;
    let setup = LoopShapingSetup::pendulum_default(&cfg.plant);
    let cert = setup
        .certificate(tol)
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    println!("norm_tzw = {:.9e}", cert.norm_tzw);
    println!("epsilon = {:.9e}", cert.epsilon);
    println!("loop_stable = {}", cert.loop_stable);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            preset,
            duration,
            quiet,
        } => {
            let overrides = ConfigOverrides {
                preset,
                seed,
                duration,
            };
            match simulate(config.as_deref(), &out, overrides, quiet) {
                Ok(true) => Ok(()),
                Ok(false) => return ExitCode::from(2),
                Err(e) => Err(e),
            }
        }
        Command::Margin { config, tol } => margin(config.as_deref(), tol),
        Command::Keys => {
            for (key, help) in CONFIG_KEYS {
                println!("{key:<34} {help}");
            }
            Ok(())
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
