//! `magnon`: run, reproduce and check magnon-transport control experiments.

mod config;
mod error;
mod experiments;
mod gradcheck;
mod output;
mod plot;
mod reproduce;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::output::{persist, run_dir, DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV};

#[derive(Parser)]
#[command(name = "magnon", version, about = "Optimal control of magnon transport in spin chains")]
struct Cli {
    /// Worker threads for ensemble and grid work (results do not depend on it).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Run directory; defaults to <output-root>/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parent of run directories.
    #[arg(long, env = OUTPUT_ROOT_ENV, default_value = DEFAULT_OUTPUT_ROOT)]
    output_root: PathBuf,
    /// Skip SVG plots.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Override a leaf value, e.g. `--set task.duration=60`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a preconfigured reference experiment at desk scale.
    Reproduce {
        #[arg(value_enum)]
        target: reproduce::Target,
        /// Use the full ensemble sizes and grids instead of the desk-scale ones.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Parse and validate a config without running it; prints the resolved config.
    ValidateConfig {
        config: PathBuf,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare adjoint gradients with central finite differences.
    GradientCheck {
        /// Take chain, task, ansatz and scheme from this config instead of the
        /// built-in 31-site instance.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value_t = 0.0)]
        abs_floor: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::config("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Run { config, overrides, output } => {
            let cfg = config::load(&config, &overrides)?;
            let dir = run_dir(output.out.as_deref(), &output.output_root, &cfg.name);
            let start = Instant::now();
            let outcome = experiments::execute(&cfg)?;
            let echo = serde_json::to_value(&cfg).expect("config serializes");
            let record = persist(&dir, "run", echo, outcome, cfg.output.plots && !output.no_plots, start.elapsed().as_secs_f64())?;
            print_summary(&dir, &record.metrics);
            Ok(())
        }
        Command::Reproduce { target, full, output } => {
            let dir = run_dir(output.out.as_deref(), &output.output_root, target.id());
            let start = Instant::now();
            let r = reproduce::run(target, full)?;
            let record = persist(&dir, "reproduce", r.settings, r.outcome, !output.no_plots, start.elapsed().as_secs_f64())?;
            print_summary(&dir, &record.metrics);
            Ok(())
        }
        Command::ValidateConfig { config, overrides } => {
            let cfg = config::load(&config, &overrides)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(())
        }
        Command::GradientCheck { config, overrides, step, tolerance, abs_floor } => {
            let mut opts = gradcheck::GradCheckOptions::default_instance();
            if let Some(path) = config {
                let cfg = config::load(&path, &overrides)?;
                opts.task = cfg.task()?;
                opts.chain = cfg.chain.clone();
                opts.schemes = vec![cfg.scheme];
                if let Some(a) = &cfg.ansatz {
                    opts.ansatzes = vec![a.clone()];
                }
                opts.disorder = match (cfg.disorder.magnitudes.first(), cfg.disorder.seeds.first()) {
                    (Some(&d), seed) => Some((d, seed.copied().unwrap_or(cfg.disorder.base_seed))),
                    (None, _) => None,
                };
            } else if !overrides.is_empty() {
                return Err(CliError::config("--set needs --config"));
            }
            opts.step = step;
            opts.tolerance = tolerance;
            opts.abs_floor = abs_floor;
            let report = gradcheck::run(&opts)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Numerical(format!(
                    "adjoint and finite-difference gradients disagree beyond tolerance {tolerance}"
                )))
            }
        }
    }
}

/// Artifacts are already on disk, so a closed stdout is not an error.
fn print_summary(dir: &std::path::Path, metrics: &serde_json::Value) {
    let summary = serde_json::json!({ "output": dir, "metrics": metrics });
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
}
