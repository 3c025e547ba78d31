//! `waveinfer`: simulate, estimate and verify damped stochastic wave and
//! plate equations from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numeric failure,
//! 3 verification failure.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use waveinfer_core::model::PresetKind;
use waveinfer_core::simulate::Scheme;
use waveinfer_core::{Error, RunConfig};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

/// Environment variable overriding the Monte Carlo worker count.
pub const THREADS_ENV: &str = "WAVEINFER_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "waveinfer",
    version,
    about = "Simulation and parameter estimation for damped stochastic wave and plate equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one path; write the decimated trajectory with running estimates.
    Simulate(Common),
    /// Estimate (a, b) from recorded statistics or from a fresh path.
    Estimate(EstimateArgs),
    /// Stationary trace and limiting variances of the estimators.
    Variances(Common),
    /// Seeded Monte Carlo study of the four estimators.
    Montecarlo(Common),
    /// Run the oracle suites against the configured model.
    Verify(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON or TOML run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in eigenvalues: κ_n = (nπ)² or (nπ)⁴
    #[arg(long, value_parser = ["wave", "plate"])]
    pub preset: Option<String>,
    /// Damping coefficient
    #[arg(long)]
    pub a: Option<f64>,
    /// Stiffness coefficient
    #[arg(long)]
    pub b: Option<f64>,
    /// Number of retained modes (presets only).
    #[arg(long)]
    pub modes: Option<usize>,
    /// Time horizon.
    #[arg(long = "T", value_name = "T")]
    pub horizon: Option<f64>,
    /// Time step
    #[arg(long)]
    pub dt: Option<f64>,
    /// Path seed, or master seed of a study
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo replications.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_parser = ["euler", "exact"])]
    pub scheme: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "waveinfer-out")]
    pub out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Path statistics JSON written by `simulate`.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["i_t", "y_t", "h_t"])]
    pub stats: Option<PathBuf>,
    /// Full-energy average I_T.
    #[arg(long = "I-T")]
    pub i_t: Option<f64>,
    /// Potential-energy average Y_T.
    #[arg(long = "Y-T", requires = "h_t")]
    pub y_t: Option<f64>,
    /// Kinetic-energy average H_T.
    #[arg(long = "H-T", requires = "y_t")]
    pub h_t: Option<f64>,
}

impl Common {
    /// Config file (if any) overridden by flags.
    pub fn run_config(&self) -> Result<RunConfig, Error> {
        let base = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            a: self.a,
            b: self.b,
            modes: self.modes,
            preset: self.preset.as_deref().map(str::parse::<PresetKind>).transpose()?,
            dt: self.dt,
            horizon: self.horizon,
            seed: self.seed,
            scheme: self.scheme.as_deref().map(str::parse::<Scheme>).transpose()?,
            reps: self.reps,
            ..Default::default()
        };
        Ok(base.overridden_by(flags))
    }
}

/// Failure of a subcommand, already classified by exit code.
pub enum Failure {
    Core(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Estimate(e) => commands::estimate(e),
        Command::Variances(c) => commands::variances(c),
        Command::Montecarlo(c) => commands::montecarlo(c),
        Command::Verify(c) => commands::verify(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => {
            eprintln!("error: verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERIC })
        }
    }
}
