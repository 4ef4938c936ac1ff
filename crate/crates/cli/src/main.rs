mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{usage, CmdError, QuerySpec};
use config::{ConfigFile, Overrides, RunConfig};

/// Bipartite graph hashing: train mixed-precision binary embeddings and
/// serve Top-K Hamming-space search over bit-packed codes.
#[derive(Parser)]
#[command(name = "sgbh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Shared hyperparameter flags; unset flags fall back to the config file
/// and then to the built-in defaults.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// `key = value` config file; flags win over file entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training mode: lightgch or sgbgh
    #[arg(long)]
    mode: Option<String>,
    /// Embedding dimensionality per layer (multiple of 8)
    #[arg(long)]
    dim: Option<usize>,
    /// Number of graph convolution layers
    #[arg(long)]
    layers: Option<usize>,
    /// Hard cap on training epochs
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Contrastive temperature
    #[arg(long)]
    tau: Option<f64>,
    /// Contrastive loss weight
    #[arg(long)]
    gamma: Option<f64>,
    /// Layer-0 ranking loss weight
    #[arg(long)]
    beta0: Option<f64>,
    /// Deep-slice ranking loss weight
    #[arg(long)]
    beta1: Option<f64>,
    /// L2 regularization coefficient
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of hash centers for sign-guided sampling
    #[arg(long)]
    centers: Option<usize>,
    #[arg(long)]
    kmeans_iters: Option<usize>,
    /// Evaluate every N epochs (0 disables)
    #[arg(long)]
    eval_every: Option<usize>,
    /// Evaluations without improvement before early stop
    #[arg(long)]
    patience: Option<usize>,
    /// Train fraction of each source's edges
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sign-gradient estimator period H
    #[arg(long)]
    fourier_h: Option<f64>,
    /// Sign-gradient estimator odd-term cutoff n
    #[arg(long)]
    fourier_terms: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CmdError> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path).map_err(usage)?,
            None => ConfigFile::default(),
        };
        let overrides = Overrides {
            mode: self.mode.clone(),
            dim: self.dim,
            layers: self.layers,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            tau: self.tau,
            gamma: self.gamma,
            beta0: self.beta0,
            beta1: self.beta1,
            lambda: self.lambda,
            centers: self.centers,
            kmeans_iters: self.kmeans_iters,
            eval_every: self.eval_every,
            patience: self.patience,
            split_ratio: self.split_ratio,
            seed: self.seed,
            fourier_h: self.fourier_h,
            fourier_terms: self.fourier_terms,
        };
        RunConfig::resolve(&overrides, &file).map_err(usage)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train embeddings on an edge list and write the packed codebook
    Train {
        /// Edge-list file (`<u> <v>` per line)
        #[arg(long)]
        edges: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a codebook against the held-out test edges
    Eval {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Layer-wise Hamming-similarity statistics over hit edges and sampled
    /// non-neighbors
    Diagnose {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of random source groups
        #[arg(long, default_value_t = 8)]
        groups: usize,
        /// Non-neighbors sampled per source
        #[arg(long, default_value_t = 2000)]
        neg_samples: usize,
        /// Top-K depth defining hit edges
        #[arg(long, default_value_t = 100)]
        top: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Top-K queries against a codebook
    Search {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated source indices to query
        #[arg(long, value_delimiter = ',')]
        queries: Option<Vec<u32>>,
        /// Draw this many random query sources instead
        #[arg(long, conflicts_with = "queries")]
        random_queries: Option<usize>,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Edge list for reconstructing train-neighbor exclusions
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Exclude each query's train neighbors from the candidates
        #[arg(long, default_value_t = false)]
        exclude_train: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a planted block-bipartite edge list
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Output file name inside --out
        #[arg(long, default_value = "edges.tsv")]
        file_name: String,
        #[arg(long, default_value_t = 8)]
        blocks: usize,
        #[arg(long, default_value_t = 320)]
        sources: u32,
        #[arg(long, default_value_t = 480)]
        destinations: u32,
        /// Within-block edge probability
        #[arg(long, default_value_t = 0.6)]
        p_in: f64,
        /// Cross-block edge probability
        #[arg(long, default_value_t = 0.02)]
        p_out: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Train { edges, out, cfg } => {
            let cfg = cfg.resolve()?;
            commands::cmd_train(&edges, &out, &cfg)
        }
        Command::Eval {
            codebook,
            edges,
            out,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            commands::cmd_eval(&codebook, &edges, &out, &cfg)
        }
        Command::Diagnose {
            codebook,
            edges,
            out,
            groups,
            neg_samples,
            top,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            commands::cmd_diagnose(&codebook, &edges, &out, &cfg, groups, neg_samples, top)
        }
        Command::Search {
            codebook,
            out,
            queries,
            random_queries,
            k,
            edges,
            exclude_train,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            let spec = match (queries, random_queries) {
                (Some(ids), None) => QuerySpec::Explicit(ids),
                (None, Some(n)) => QuerySpec::Random(n),
                (None, None) => return Err(usage("pass --queries or --random-queries")),
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            commands::cmd_search(&codebook, &out, &cfg, spec, k, edges.as_deref(), exclude_train)
        }
        Command::Synth {
            out,
            file_name,
            blocks,
            sources,
            destinations,
            p_in,
            p_out,
            seed,
        } => commands::cmd_synth(&out, &file_name, blocks, sources, destinations, p_in, p_out, seed)
            .map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
