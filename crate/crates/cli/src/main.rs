//! Command-line frontend: reproducible experiments over the dual-training
//! pipeline. Every command is fully determined by its inputs, flags, and
//! seed; errors exit nonzero with a one-line machine-parsable reason.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "duorec",
    about = "Cross-domain recommender experiments: dual training over an orthogonal embedding mapping",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct TrainFlags {
    /// Base seed for every stochastic stage.
    #[arg(long)]
    seed: u64,
    /// Plain-text key=value config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Latent embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Convergence threshold on the epoch-to-epoch total-loss change.
    #[arg(long)]
    eps: Option<f64>,
    /// Recommender learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Mapping learning rate (per overlap pair).
    #[arg(long)]
    lr_map: Option<f64>,
    /// Mini-batch size for recommender training.
    #[arg(long)]
    batch: Option<usize>,
    /// Dropout rate on recommender hidden layers.
    #[arg(long)]
    dropout: Option<f64>,
    /// Embedding source: `features` (autoencoder) or `ids` (free table).
    #[arg(long)]
    feature_mode: Option<String>,
    /// Recommender hidden activation: `tanh` or `relu`.
    #[arg(long)]
    rs_activation: Option<String>,
    /// Autoencoder hidden widths, comma separated; empty string = linear.
    #[arg(long)]
    ae_hidden: Option<String>,
    /// Autoencoder training epochs.
    #[arg(long)]
    ae_epochs: Option<usize>,
    /// Autoencoder learning rate.
    #[arg(long)]
    ae_lr: Option<f64>,
    /// Whiten encoder-derived embedding tables (true/false).
    #[arg(long)]
    whiten: Option<bool>,
}

#[derive(clap::Args, Clone)]
struct SynthFlags {
    /// Users per domain.
    #[arg(long)]
    users: Option<usize>,
    /// Items per domain.
    #[arg(long)]
    items: Option<usize>,
    /// Shared users across the two domains.
    #[arg(long)]
    overlap: Option<usize>,
    /// Rating noise level.
    #[arg(long)]
    noise: Option<f64>,
    /// Feature noise level.
    #[arg(long)]
    feature_noise: Option<f64>,
    /// Ratings per user.
    #[arg(long)]
    ratings_per_user: Option<usize>,
    /// Explicit feature dimension (users and items).
    #[arg(long)]
    feature_dim: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic coupled domain pair on disk.
    Synth {
        /// Output directory; receives domain_a/, domain_b/, planted_map.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Latent dimension of the generator.
        #[arg(long)]
        dim: Option<usize>,
        #[command(flatten)]
        synth: SynthFlags,
    },
    /// Train the dual pipeline on two domain directories.
    Train {
        #[arg(long)]
        domain_a: PathBuf,
        #[arg(long)]
        domain_b: PathBuf,
        /// Output directory for checkpoints, embeddings, and history.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Evaluate trained checkpoints against rating data.
    Eval {
        #[arg(long)]
        domain_a: PathBuf,
        #[arg(long)]
        domain_b: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Output directory for metrics.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Overlap-count ablation on a synthetic pair; emits curve.csv.
    AblateOverlap {
        #[arg(long)]
        out: PathBuf,
        /// Overlap counts to evaluate, comma separated; `all` allowed.
        #[arg(long, default_value = "0,8,all")]
        counts: String,
        /// `unlink` keeps de-linked users' ratings; `discard` removes them.
        #[arg(long, default_value = "unlink")]
        mode: String,
        /// Number of seeded repetitions per count.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Parallel worker threads over grid cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Embedding-dimension sweep; emits curve.csv.
    SweepDim {
        #[arg(long)]
        out: PathBuf,
        /// Dimensions to evaluate, comma separated.
        #[arg(long, default_value = "4,8,16,32,64,128,256")]
        dims: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Training-time scaling over increasing record counts; emits curve.csv.
    Scalability {
        #[arg(long)]
        out: PathBuf,
        /// Total record counts to time, comma separated.
        #[arg(long, default_value = "100,1000,10000,100000")]
        sizes: String,
        /// Skip sizes above this many records.
        #[arg(long, default_value_t = 200_000)]
        max_records: usize,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Feature-mode comparison (features vs ids-only); emits curve.csv.
    FeatureModes {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Coupled nonnegative factorization demonstrator; emits
    /// nmf_history.csv and a condition report.
    NmfDemo {
        #[arg(long)]
        out: PathBuf,
        /// Mixing weight between the domains' reconstructions.
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long, default_value_t = 500)]
        iters: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.reason_slug());
            ExitCode::FAILURE
        }
    }
}
