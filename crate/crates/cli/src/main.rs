//! `forgefuse`: forgetting analysis, checkpoint fusion and linear-model
//! experiments over prediction logs.
//!
//! Exit status is 0 on success, 2 for invalid input (flags, files,
//! configurations) and 1 for failures while running. Errors are reported as
//! one JSON object on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod features;
mod linear;
mod output;
mod spectral;
mod svg;

use error::{CliError, EXIT_INVALID_INPUT};
use output::Format;

#[derive(Debug, Parser)]
#[command(name = "forgefuse", version, about = "Forgetting analysis and checkpoint fusion over prediction logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Fraction of examples used for validation.
    #[arg(long, default_value_t = 0.5)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    All,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// The final checkpoint alone.
    Single,
    /// Mean of the last k checkpoints.
    Horizontal,
    /// Mean of k evenly spaced checkpoints.
    FixedJumps,
    /// Best checkpoint on the validation split.
    EarlyStopping,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a log and print its manifest.
    Inspect {
        #[arg(long)]
        log: PathBuf,
    },
    /// Forget and learn curves plus per-example histories.
    Forget {
        #[arg(long)]
        log: PathBuf,
        /// Examples to analyse.
        #[arg(long, value_enum, default_value_t = Subset::All)]
        subset: Subset,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit a fusion plan on the validation split and evaluate it on the test split.
    Fuse {
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        /// Half-width of the checkpoint averaging window.
        #[arg(long, default_value_t = 1)]
        window: u32,
        #[arg(long, default_value_t = 0.01)]
        eps_step: f64,
        /// Stop after this many accepted steps.
        #[arg(long)]
        max_steps: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate a comparison method.
    Baseline {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Ensemble size for horizontal and fixed-jumps.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train a deep linear network and compare it with the closed form.
    Linear {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configuration seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Overlap of principal-component forgetting with checkpoint forgetting.
    Spectral {
        /// CSV of `label,x_1,...,x_d` rows.
        #[arg(long, conflicts_with = "config")]
        features: Option<PathBuf>,
        /// JSON Gaussian-class generator.
        #[arg(long, required_unless_present = "features")]
        config: Option<PathBuf>,
        /// Log over the same points; the truncation sweep itself when absent.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ridge: Option<f64>,
        /// Override the fitted correspondence `n = alpha k + beta`.
        #[arg(long, requires = "beta")]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        beta: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Newly memorized high-loss examples, clean minus noisy.
    NoiseMem {
        #[arg(long)]
        log: PathBuf,
        /// Loss quantile above which examples count.
        #[arg(long, default_value_t = 0.75)]
        quantile: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FORGEFUSE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::invalid("invalid_env", format!("FORGEFUSE_THREADS={raw} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::operational("thread_pool", e.to_string()))
}

fn run(command: Command) -> Result<String, CliError> {
    configure_threads()?;
    match command {
        Command::Inspect { log } => commands::inspect(&log),
        Command::Forget { log, subset, split, out } => commands::forget(&log, subset, &split, &out),
        Command::Fuse {
            log,
            split,
            window,
            eps_step,
            max_steps,
            out,
        } => commands::fuse(&log, &split, window, eps_step, max_steps, &out),
        Command::Baseline { log, method, k, split, out } => commands::baseline(&log, method, k, &split, &out),
        Command::Linear { config, seed, out } => linear::run(&config, seed, &out),
        Command::Spectral {
            features,
            config,
            log,
            seed,
            ridge,
            alpha,
            beta,
            out,
        } => {
            let source = match (features, config) {
                (Some(f), _) => spectral::Points::Features(f),
                (None, Some(c)) => spectral::Points::Generator(c),
                (None, None) => unreachable!("clap requires one of --features, --config"),
            };
            let correspondence = alpha.zip(beta);
            spectral::run(&source, log.as_deref(), seed, ridge, correspondence, &out)
        }
        Command::NoiseMem { log, quantile, out } => commands::noise_mem(&log, quantile, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::invalid("usage", e.render().to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(EXIT_INVALID_INPUT);
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code)
        }
    }
}
