//! The `lingan` command line: argument definitions and command dispatch.

mod commands;
mod loaded;
mod store;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lingan::fingerprint::FilterKind;
use lingan::gan::{GanConfig, LossKind};
use lingan::metrics::Averaging;
use lingan::protocol::CompareConfig;

#[derive(Parser)]
#[command(name = "lingan", version, about = "Language affinity from GAN-generated text fingerprints")]
pub struct Cli {
    /// Root of the artifact store.
    #[arg(long, global = true, env = store::ROOT_ENV, default_value = store::DEFAULT_ROOT)]
    artifact_root: PathBuf,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Digitize and fingerprint the texts listed in a manifest.
    Ingest {
        manifest: PathBuf,
    },
    /// Run the two-trial comparison for one pair or for every pair.
    Compare(CompareArgs),
    /// Radar plots and affinity tables from a distance-matrix CSV.
    Report(ReportArgs),
    /// Ablations and the secondary-fake experiment.
    Robustness {
        #[command(subcommand)]
        which: RobustnessCommand,
    },
    /// Rerun the command recorded in a run directory and check the outputs match.
    Replay {
        run: PathBuf,
        /// Corpus to use instead of the recorded path; its digest must match.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CompareArgs {
    /// Manifest file or ingested corpus directory.
    corpus: PathBuf,
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "all", required_unless_present = "all")]
    pair: Option<Vec<String>>,
    #[arg(long)]
    all: bool,
    #[command(flatten)]
    run: RunArgs,
    /// Also persist weights, traces and fakes of every trial.
    #[arg(long)]
    save_trials: bool,
}

#[derive(Args)]
struct ReportArgs {
    matrix: PathBuf,
    #[arg(long)]
    radar: bool,
    #[arg(long)]
    tables: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings shared by every training command.
#[derive(Args, Clone)]
struct RunArgs {
    /// Global seed; required so every run is reproducible.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    gan: GanArgs,
    /// Worker threads for independent pairs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory instead of the store location.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct GanArgs {
    #[arg(long, default_value_t = 1600)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    latent_dim: usize,
    #[arg(long, default_value_t = 2e-4)]
    gen_lr: f64,
    #[arg(long, default_value_t = 2e-4)]
    critic_lr: f64,
    #[arg(long, default_value_t = 0.5)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    /// bce or mse.
    #[arg(long, default_value = "bce")]
    gen_loss: LossKind,
    #[arg(long, default_value = "bce")]
    critic_loss: LossKind,
    #[arg(long)]
    critic_learnable: bool,
    #[arg(long, default_value_t = 16)]
    emit_stride: usize,
    #[arg(long, default_value_t = 400)]
    emit_window: usize,
    #[arg(long, default_value_t = 0)]
    train_tile: usize,
    #[arg(long, default_value_t = 0)]
    test_tile: usize,
    /// Pool c-values before the log ratio (c-values) or average per-fake ratios (rho).
    #[arg(long, default_value = "c-values", value_parser = parse_averaging)]
    averaging: Averaging,
}

fn parse_averaging(s: &str) -> Result<Averaging, String> {
    match s {
        "c-values" => Ok(Averaging::CValues),
        "rho" => Ok(Averaging::Rho),
        other => Err(format!("unknown averaging `{other}` (expected c-values or rho)")),
    }
}

impl RunArgs {
    fn compare_config(&self) -> CompareConfig {
        let g = &self.gan;
        CompareConfig {
            gan: GanConfig {
                epochs: g.epochs,
                latent_dim: g.latent_dim,
                gen_lr: g.gen_lr,
                critic_lr: g.critic_lr,
                beta1: g.beta1,
                beta2: g.beta2,
                gen_loss: g.gen_loss,
                critic_loss: g.critic_loss,
                critic_learnable: g.critic_learnable,
                emit_stride: g.emit_stride,
                emit_window: g.emit_window,
                seed: self.seed,
            },
            train_tile_index: g.train_tile,
            test_tile_index: g.test_tile,
            averaging: g.averaging,
        }
    }
}

#[derive(Args, Clone)]
struct AblationArgs {
    /// Manifest file or ingested corpus directory.
    corpus: PathBuf,
    /// Restrict the pair set to one pair (default: every pair of the roster).
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pair: Option<Vec<String>>,
    /// Number of consecutive global seeds starting at --seed (default 3, 5 for critic).
    #[arg(long)]
    seeds: Option<usize>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum RobustnessCommand {
    /// Smooth or low-pass every tile before training.
    Filters {
        #[command(flatten)]
        common: AblationArgs,
        /// none, fourier[:keep], gauss_h[:sigma], gauss_v[:sigma], gauss_hv[:sigma]; default the four smoothing filters.
        #[arg(long = "filter", value_parser = parse_filter)]
        filters: Vec<FilterKind>,
    },
    /// Let the critic learn.
    Critic {
        #[command(flatten)]
        common: AblationArgs,
    },
    /// Swap each loss to mean squared error.
    Loss {
        #[command(flatten)]
        common: AblationArgs,
    },
    /// Rerun at other epoch counts.
    Epochs {
        #[command(flatten)]
        common: AblationArgs,
        #[arg(required = true, num_args = 1..)]
        grid: Vec<usize>,
    },
    /// Add one language from the corpus to the roster of the others.
    AddLanguage {
        #[command(flatten)]
        common: AblationArgs,
        language: String,
    },
    /// Train a second GAN on a primary fake and correlate its fakes.
    Jackknife {
        #[command(flatten)]
        common: AblationArgs,
        a: String,
        b: String,
    },
}

fn parse_filter(s: &str) -> Result<FilterKind, String> {
    s.parse::<FilterKind>().map_err(|e| e.to_string())
}

/// Where a command left its output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub dir: PathBuf,
    /// Set when some pairs failed; points at the failure list.
    pub failures: Option<PathBuf>,
}

impl Cli {
    pub fn verbosity(&self) -> u8 {
        self.verbose
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> anyhow::Result<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

/// Runs one parsed command line against the artifact store.
pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let root = cli.artifact_root;
    match cli.command {
        Command::Ingest { manifest } => commands::ingest(&root, &manifest),
        Command::Compare(args) => commands::compare(&root, args),
        Command::Report(args) => commands::report(&root, args),
        Command::Robustness { which } => commands::robustness(&root, which),
        Command::Replay { run, corpus, jobs, out } => commands::replay(&root, &run, corpus.as_deref(), jobs, &out),
    }
}
