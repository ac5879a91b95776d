//! `oneshot-qcap`: capacity bounds, entropies, random-coding simulation and
//! information-spectrum windows from JSON inputs.
//!
//! Exit codes: 0 success, 1 undetermined spectrum window, 2 malformed input,
//! 3 size guard, 4 trial budget.

mod commands;
mod input;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oneshot_qcap::QcapError;

pub const THREADS_ENV: &str = "ONESHOT_QCAP_THREADS";

#[derive(Parser)]
#[command(name = "oneshot-qcap", version, about = "One-shot quantum capacity toolbox")]
struct Cli {
    /// Worker threads; falls back to ONESHOT_QCAP_THREADS, then the core count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Haar-random isometries per code dimension.
    #[arg(long, default_value_t = 4)]
    pub trials: usize,
    #[arg(long, default_value_t = 2)]
    pub hill_steps: usize,
    /// Comma-separated code dimensions to search (default: all).
    #[arg(long, value_delimiter = ',')]
    pub code_dims: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Command {
    /// Lower and upper one-shot capacity bounds for a channel.
    Bounds {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Also bracket the minimal-fidelity capacity at 2ε.
        #[arg(long)]
        qmin: bool,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Entropic quantities for each request in a JSON (lines) file.
    Entropy {
        #[arg(long)]
        input: PathBuf,
        /// Smoothing parameter; smoothed quantities are added when positive.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// Monte-Carlo random-coding fidelity against its analytic lower bound.
    SimulateCoding {
        #[arg(long)]
        channel: PathBuf,
        /// Dimension s of the canonical input subspace (default: channel input dim).
        #[arg(long)]
        code_dim: Option<usize>,
        /// Code rank m (default: s).
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Information-spectrum transition windows.
    Spectrum {
        /// A sequence pair (iid or markov).
        #[arg(long, conflicts_with = "channel", required_unless_present = "channel")]
        input: Option<PathBuf>,
        /// A channel; windows of its iid coherent-information spectrum.
        #[arg(long)]
        channel: Option<PathBuf>,
        /// Comma-separated block lengths (default: 1..=n-max).
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
        grid_lo: f64,
        #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
        grid_hi: f64,
        #[arg(long, default_value_t = 65)]
        grid_points: usize,
        #[arg(long, default_value_t = oneshot_qcap::spectrum::TOL_WINDOW)]
        tol: f64,
    },
    /// Capacity bounds per channel use for n = 1..=n-max.
    PerUse {
        /// Single-use channel of an iid sequence.
        #[arg(long, conflicts_with = "sequence", required_unless_present = "sequence")]
        channel: Option<PathBuf>,
        /// A channel sequence file.
        #[arg(long)]
        sequence: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 2)]
        n_max: usize,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}:{line}:{column}: {msg}", path.display())]
    Input { path: PathBuf, line: usize, column: usize, msg: String },
    #[error("{}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] QcapError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } | CliError::Io { .. } | CliError::Usage(_) => 2,
            CliError::Core(QcapError::Dimension(_) | QcapError::Domain(_)) => 2,
            CliError::Core(QcapError::Resource(_)) => 3,
            CliError::Core(QcapError::Budget(_)) => 4,
            CliError::Core(QcapError::WindowUndetermined { .. }) => 1,
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Usage("thread count must be positive".into()));
    }
    Ok(n)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let text = match cli.command {
        Command::Bounds { channel, epsilon, qmin, search } => commands::bounds(&channel, epsilon, qmin, &search)?,
        Command::Entropy { input, delta } => commands::entropy(&input, delta)?,
        Command::SimulateCoding { channel, code_dim, rank, delta, trials, seed } => {
            commands::simulate(&channel, code_dim, rank, delta, trials, seed)?
        }
        Command::Spectrum { input, channel, n_list, n_max, grid_lo, grid_hi, grid_points, tol } => {
            let grid = oneshot_qcap::spectrum::GammaGrid::new(grid_lo, grid_hi, grid_points)?;
            match (input, channel) {
                (Some(p), _) => commands::spectrum_pair(&p, n_list, n_max, &grid, tol)?,
                (None, Some(c)) => commands::spectrum_channel(&c, n_list, n_max, &grid, tol)?,
                (None, None) => return Err(CliError::Usage("spectrum needs --input or --channel".into())),
            }
        }
        Command::PerUse { channel, sequence, epsilon, n_max, search } => {
            commands::per_use(channel.as_deref(), sequence.as_deref(), epsilon, n_max, &search)?
        }
    };
    match cli.out {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Io { path, msg: e.to_string() }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io { path: "<stdout>".into(), msg: e.to_string() }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
