//! `dyngamma` command-line interface.
//!
//! Exit codes: 0 success, 2 data error, 3 numeric error, 4 configuration
//! error. Failures print a single JSON object to stderr.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::CliError;

#[derive(Debug, Parser)]
#[command(name = "dyngamma", version, about = "Route travel time reliability with a shared dynamic Gamma environment")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to available parallelism. Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for all outputs; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Periods excluded from calibration statistics.
    #[arg(long, global = true, default_value_t = dyngamma::env_filter::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    /// Observation shape.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub alpha: f64,
    /// Discount factor.
    #[arg(long, global = true, default_value_t = 0.7)]
    pub gamma: f64,
    /// On-time threshold as a multiple of free-flow route time.
    #[arg(long, global = true, default_value_t = dyngamma::route::DEFAULT_TAU_MULTIPLE)]
    pub tau_multiple: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    /// Corridor filter on segments, route law by moment matching.
    Multivariate,
    /// Univariate filter on route totals.
    Univariate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build segment travel times from sensor and speed CSVs.
    Ingest {
        #[arg(long)]
        sensors: PathBuf,
        #[arg(long)]
        speeds: PathBuf,
        /// Optional `sensor_id,distance_mi` overrides.
        #[arg(long)]
        distances: Option<PathBuf>,
        /// Keep one weekday only (mon..sun).
        #[arg(long, default_value = "wed")]
        weekday: String,
        /// Keep every weekday.
        #[arg(long, conflicts_with = "weekday")]
        all_days: bool,
        /// Comma-separated hours of day.
        #[arg(long, value_delimiter = ',', default_value = "14,15,16,17,18,19,20")]
        hours: Vec<u32>,
        /// Restrict to one year; also fixes the slot calendar.
        #[arg(long)]
        year: Option<i32>,
    },
    /// Simulate a corridor from the generative model.
    Simulate {
        /// Comma-separated segment rates (rescaled to unit mean).
        #[arg(long, value_delimiter = ',', conflicts_with = "segments")]
        lambdas: Option<Vec<f64>>,
        /// Number of identical segments.
        #[arg(long, default_value_t = 16)]
        segments: usize,
        #[arg(long, default_value_t = 500)]
        periods: usize,
        #[arg(long, default_value_t = 2.5)]
        init_shape: f64,
        #[arg(long, default_value_t = 2.5)]
        init_rate: f64,
    },
    /// One-step-ahead route predictions and reliability metrics.
    Filter {
        #[arg(long)]
        observations: PathBuf,
        /// `corridor.json` from `ingest`; rates are calibrated from the data otherwise.
        #[arg(long)]
        corridor: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "multivariate")]
        mode: Mode,
    },
    /// Empirical-Bayes search over (alpha, gamma).
    Grid {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "multivariate")]
        mode: Mode,
    },
    /// Posterior sampling of the segment rates.
    Gibbs {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, default_value_t = 4)]
        chains: usize,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        /// Iterations discarded at the start of each chain.
        #[arg(long, default_value_t = 2_000)]
        warmup: usize,
        #[arg(long, default_value_t = 2)]
        thin: usize,
        /// Also sample the discount factor by Metropolis.
        #[arg(long)]
        sample_gamma: bool,
        /// Concentration of the Beta proposal for the discount factor.
        #[arg(long, default_value_t = 50.0)]
        concentration: f64,
    },
    /// Particle filter with per-particle conjugate states.
    Pf {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        corridor: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        particles: usize,
        #[arg(long, default_value_t = 0.5)]
        ess_threshold: f64,
        /// Redraw segment rates from each particle's sufficient statistics.
        #[arg(long)]
        learn_lambdas: bool,
    },
    /// Compare the dynamic model with static route baselines.
    Compare {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        corridor: Option<PathBuf>,
        #[arg(long, default_value_t = dyngamma::baselines::DEFAULT_COPULA_DRAWS)]
        copula_draws: usize,
    },
    /// Static distribution fits to route totals.
    StaticFit {
        #[arg(long)]
        observations: PathBuf,
    },
    /// Gamma mixtures with 1..=max-k components on route totals.
    Mixture {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_k: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return report(&CliError::Config(e.to_string().trim().to_string())),
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{body}");
    ExitCode::from(e.exit_code())
}
