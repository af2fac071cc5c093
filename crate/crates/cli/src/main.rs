use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use snrlab_core::config::Config;
use snrlab_core::experiment::{self, ExperimentReport};
use snrlab_core::parallel;
use snrlab_core::selftest::{self, SelftestOptions};

/// Analytic diffusion-sampler lab: exposure-bias diagnostics and corrections.
///
/// Worker count is capped by the SNRLAB_THREADS environment variable.
#[derive(Parser)]
#[command(name = "snrlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run { config: PathBuf },
    /// Two-stage search over the low/high correction strengths.
    Search { config: PathBuf },
    /// Closed-form curves for the configured schedule and bias profile.
    Theory { config: PathBuf },
    /// Run the invariant suite; exits nonzero on any failure.
    Selftest {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0.5, hide = true)]
        haar_scale: f64,
    },
    /// Print the schedule table as CSV.
    ScheduleDump { config: PathBuf },
}

fn load(path: &Path) -> Result<Config> {
    Config::from_path(path).with_context(|| format!("loading {}", path.display()))
}

fn print_report(report: &ExperimentReport, dir: &Path) {
    println!("{} ({}) -> {}", report.name, report.command, dir.display());
    for (k, v) in &report.metrics {
        if v.stderr.is_nan() {
            println!("  {k} = {:.6}", v.value);
        } else {
            println!("  {k} = {:.6} ± {:.6}", v.value, v.stderr);
        }
    }
    for note in &report.notes {
        println!("  note: {note}");
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let threads = parallel::threads_from_env()?;
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let report = experiment::run_experiment(&cfg, threads)?;
            print_report(&report, &cfg.output_dir());
        }
        Command::Search { config } => {
            let cfg = load(&config)?;
            let (report, _) = experiment::run_search(&cfg, threads)?;
            print_report(&report, &cfg.output_dir());
        }
        Command::Theory { config } => {
            let cfg = load(&config)?;
            let report = experiment::run_theory(&cfg, threads)?;
            print_report(&report, &cfg.output_dir());
        }
        Command::Selftest { trials, haar_scale } => {
            let summary = selftest::selftest(SelftestOptions { haar_scale, trials });
            print!("{}", summary.render());
            if !summary.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::ScheduleDump { config } => {
            print!("{}", experiment::schedule_dump(&load(&config)?)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
