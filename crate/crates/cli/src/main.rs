use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mwe_cli::commands::{cmd_benchmark, cmd_evaluate, cmd_simulate, cmd_solve, SolveOptions};
use mwe_cli::config::{ExperimentConfig, SolverName};
use mwe_cli::error::CliError;
use mwe_core::solvers::LambdaScale;

/// Minimum Wasserstein Estimates: simulate group inverse problems, fit
/// sparse estimators, score and benchmark them.
#[derive(Parser)]
#[command(name = "mwe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated instances, one directory per condition and trial.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit one solver on an instance directory.
    Solve {
        instance: PathBuf,
        #[arg(long)]
        solver: SolverName,
        #[arg(long)]
        out: PathBuf,
        /// File with a `[solver NAME]` section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        lambda_rel: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        /// `per-subject` or `global`.
        #[arg(long, value_parser = parse_scale)]
        lambda_scale: Option<LambdaScale>,
    },
    /// Score a result directory against the truth of its instance.
    Evaluate {
        instance: PathBuf,
        result: PathBuf,
        /// CSV file to append the scores to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every solver grid on every trial and write CSVs and plots.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn parse_scale(s: &str) -> Result<LambdaScale, String> {
    match s {
        "per-subject" => Ok(LambdaScale::PerSubject),
        "global" => Ok(LambdaScale::Global),
        other => Err(format!("expected 'per-subject' or 'global', found '{other}'")),
    }
}

fn load(config: Option<&PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut c = match config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let c = load(config.as_ref(), seed)?;
            let dirs = cmd_simulate(&c, out.as_ref().unwrap_or(&c.output_dir))?;
            for d in dirs {
                println!("{}", d.display());
            }
        }
        Command::Solve {
            instance,
            solver,
            out,
            config,
            lambda_rel,
            mu,
            lambda_scale,
        } => {
            let options = SolveOptions {
                config,
                lambda_rel,
                mu,
                lambda_scale,
            };
            let result = cmd_solve(&instance, solver, &options, &out)?;
            print!("{}", result.run);
        }
        Command::Evaluate { instance, result, out } => {
            let r = cmd_evaluate(&instance, &result, out.as_deref())?;
            println!("subject,mse,auc,emd_mm");
            for (s, sc) in r.per_subject.iter().enumerate() {
                println!("{s},{},{},{}", sc.mse, sc.auc, sc.emd_mm);
            }
            println!("mean,{},{},{}", r.mse, r.auc, r.emd_mm);
        }
        Command::Benchmark {
            config,
            out,
            seed,
            threads,
        } => {
            let c = load(Some(&config), seed)?;
            let bench = cmd_benchmark(&c, out.as_deref(), threads)?;
            let failures: usize = bench.results.iter().map(|r| r.failures).sum();
            if failures > 0 {
                eprintln!("{failures} grid point(s) failed; see grid.csv");
            }
            print!("{}", mwe_cli::commands::summary_csv(&bench));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
