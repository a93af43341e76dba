//! `ewens-stein`: Ewens probabilities, Stein-pair diagnostics and explicit
//! normal-approximation bounds for Σ a_{i,π(i)} from the command line.

mod commands;
mod source;
mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::source::Generator;
use crate::verify::Suite;

#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration; exit code 2.
    Usage(String),
    /// The computation itself failed, e.g. a degenerate variance; exit code 1.
    Numeric(String),
}

impl From<ewens_stein::Error> for CliError {
    fn from(e: ewens_stein::Error) -> Self {
        use ewens_stein::Error::*;
        match e {
            DegenerateVariance(_) | DegenerateSquareBias => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ewens-stein", version, about, long_about = None)]
#[command(after_help = "Set EWENS_STEIN_THREADS to cap the number of worker threads.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Probability of a permutation or cycle type under the Ewens measure.
    Pmf(PmfArgs),
    /// Draw Ewens permutations, or full zero-bias couplings with --coupling.
    Sample(SampleArgs),
    /// Fixed-point moments, κ constants and joint cycle-count factorial moments.
    Moments(MomentArgs),
    /// Variance decomposition and distance bounds for one matrix.
    Bounds(BoundsArgs),
    /// Run a named verification suite against exhaustive enumeration.
    Verify(VerifyArgs),
    /// Sweep θ and/or n, one bound report per grid point.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EyrChoice {
    /// Enumerate S_n when n ≤ 8, Monte Carlo otherwise.
    Auto,
    Exact,
    SecondMoment,
    MonteCarlo,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MatrixArgs {
    /// n lines of n comma-separated decimals (or a JSON array of rows if the
    /// name ends in .json).
    #[arg(long, value_name = "PATH", conflicts_with = "generator")]
    pub matrix: Option<PathBuf>,
    /// uniform01 or integer-range[:LO:HI].
    #[arg(long, value_name = "NAME", default_value = "uniform01")]
    pub generator: Generator,
    /// Seed for the generator; defaults to --seed.
    #[arg(long)]
    pub matrix_seed: Option<u64>,
    /// Replace A by (A + Aᵀ)/2 before use.
    #[arg(long)]
    pub symmetrize: bool,
}

#[derive(Args, Debug)]
struct PmfArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    theta: f64,
    /// One-line notation, 1-based: "2,3,1".
    #[arg(long, group = "input")]
    perm: Option<String>,
    /// Cycle notation, 1-based: "(1)(2435)".
    #[arg(long, group = "input")]
    cycles: Option<String>,
    /// Cycle type c₁,…,c_n: "1,0,0,1".
    #[arg(long, group = "input")]
    ctype: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit (π, I, J, pre-images, images, π†, π‡, Y′, Y*) records instead
    /// of bare permutations.
    #[arg(long)]
    coupling: bool,
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct MomentArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    theta: f64,
    /// Orders m₁,…,m_k of E Π (c_j)_(m_j): "2,0,1".
    #[arg(long)]
    orders: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct BoundSettings {
    /// Draws for empirical distances (at least 1000); omitted skips them.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also compute exact distances by enumerating S_n (n ≤ 8).
    #[arg(long)]
    pub exact: bool,
    /// Report the integer lower bound even if entries are not integers.
    #[arg(long)]
    pub force_integer_lower_bound: bool,
    /// How E[Y′R] entering σ² is computed.
    #[arg(long, value_enum, default_value_t = EyrChoice::Auto)]
    pub eyr: EyrChoice,
    /// Monte Carlo draws for E[Y′R].
    #[arg(long, default_value_t = 100_000)]
    pub eyr_samples: usize,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    theta: f64,
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    settings: BoundSettings,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform01")]
    generator: Generator,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, conflicts_with = "n_grid", value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    /// Comma-separated n values.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long, conflicts_with = "theta_grid")]
    theta: Option<f64>,
    /// Comma-separated θ values.
    #[arg(long)]
    theta_grid: Option<String>,
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    settings: BoundSettings,
    #[command(flatten)]
    output: OutputArgs,
}

/// Writes `text` to `path`, or stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Numeric(format!("stdout: {e}"))),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("EWENS_STEIN_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CliError::Usage(format!("EWENS_STEIN_THREADS must be a positive integer (got {value:?})"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Numeric(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Pmf(a) => {
            let text = commands::pmf(
                a.n as usize,
                a.theta,
                a.perm.as_deref(),
                a.cycles.as_deref(),
                a.ctype.as_deref(),
                a.output.format,
            )?;
            emit(a.output.out.as_deref(), &text)
        }
        Command::Sample(a) => {
            let text = commands::sample(
                a.n as usize,
                a.theta,
                a.samples,
                a.seed,
                a.coupling.then_some(&a.matrix),
                a.output.format.unwrap_or(Format::Json),
            )?;
            emit(a.output.out.as_deref(), &text)
        }
        Command::Moments(a) => {
            let text = commands::moments(
                a.n as usize,
                a.theta,
                a.orders.as_deref(),
                a.output.format.unwrap_or(Format::Json),
            )?;
            emit(a.output.out.as_deref(), &text)
        }
        Command::Bounds(a) => {
            let text = commands::bounds(
                a.n as usize,
                a.theta,
                &a.matrix,
                &a.settings,
                a.output.format.unwrap_or(Format::Json),
            )?;
            emit(a.output.out.as_deref(), &text)
        }
        Command::Verify(a) => {
            let report = verify::run(a.suite, a.n as usize, a.theta, a.seed, a.generator)?;
            let text = report.render(a.output.format.unwrap_or(Format::Json));
            emit(a.output.out.as_deref(), &text)?;
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Numeric(format!("suite {} failed", report.suite)))
            }
        }
        Command::Experiment(a) => {
            let ns = match (a.n, a.n_grid.as_deref()) {
                (Some(n), None) => vec![n as usize],
                (None, Some(grid)) => commands::parse_grid::<usize>(grid, "n")?,
                _ => return Err(CliError::Usage("give --n or --n-grid".into())),
            };
            let thetas = match (a.theta, a.theta_grid.as_deref()) {
                (Some(t), None) => vec![t],
                (None, Some(grid)) => commands::parse_grid::<f64>(grid, "θ")?,
                _ => return Err(CliError::Usage("give --theta or --theta-grid".into())),
            };
            let text = commands::experiment(
                &ns,
                &thetas,
                &a.matrix,
                &a.settings,
                a.output.format.unwrap_or(Format::Csv),
            )?;
            emit(a.output.out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
