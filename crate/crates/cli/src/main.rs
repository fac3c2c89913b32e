use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eki_bpinn::runner::{self, ExperimentConfig, Overrides};
use eki_bpinn::{selftest, Error};

/// Ensemble Kalman inversion for Bayesian physics-informed neural networks.
#[derive(Parser)]
#[command(name = "eki-bpinn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment. Flags override fields of the config file, which override defaults.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        problem: Option<String>,
        /// Measurement noise std.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Output directory (default: results).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Threads for member evaluation (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write the noisy datasets and reference solution of a problem as CSV.
    Datagen {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the oracle checks.
    Selftest,
}

fn fail(err: &Error) -> ExitCode {
    println!("{}", runner::error_report(err));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, problem, noise, seed, trials, out, workers } => {
            let mut cfg = match config {
                Some(path) => match ExperimentConfig::from_file(&path) {
                    Ok(c) => c,
                    Err(e) => return fail(&e),
                },
                None => ExperimentConfig::default(),
            };
            cfg.apply(Overrides { problem, noise_level: noise, seed, trials, out_dir: out, workers });
            let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
            let bundle = match runner::run_experiment(&cfg) {
                Ok(b) => b,
                Err(e) => return fail(&e),
            };
            print!("{}", bundle.table());
            match runner::emit(&bundle, &dir) {
                Ok(paths) => {
                    for p in paths {
                        println!("wrote {}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Datagen { problem, out, noise, seed } => match runner::datagen(&problem, noise, seed, &out) {
            Ok(paths) => {
                for p in paths {
                    println!("wrote {}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
                println!("{}", serde_json::json!({ "status": "error", "kind": "selftest_failed", "failed": failed }));
                ExitCode::FAILURE
            }
        }
    }
}
