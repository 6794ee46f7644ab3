use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ffrfd", version, about = "Facial-region feature descriptors for DeepFake detection")]
pub struct Cli {
    /// TOML file with default settings; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for extraction, statistics and training
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Log progress (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DetectorKind {
    FastBrief,
    Orb,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitFilter {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DetectorArgs {
    #[arg(long, value_enum)]
    pub detector: Option<DetectorKind>,

    /// FAST intensity threshold t
    #[arg(long)]
    pub fast_threshold: Option<u8>,

    /// Keypoints kept by ORB after Harris ranking
    #[arg(long)]
    pub n_top: Option<usize>,

    /// Seed of the BRIEF sampling pattern
    #[arg(long)]
    pub pattern_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ForestArgs {
    #[arg(long)]
    pub n_trees: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Features tried per split (default: floor(sqrt(D)))
    #[arg(long)]
    pub max_features: Option<usize>,

    #[arg(long)]
    pub min_samples_leaf: Option<usize>,

    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean keypoint count per facial region and class
    Stats {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Build the FFR_FD feature table of a manifest
    Extract {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorArgs,
        /// ave or no_ave
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train a random forest on a feature table
    Train {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        forest: ForestArgs,
        /// Rows to train on; defaults to the train split, or every row when no split is assigned
        #[arg(long, value_enum)]
        split: Option<SplitFilter>,
    },
    /// Score a feature table and report ROC-AUC
    Eval {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Per-sample scores CSV
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Rows to score; defaults to the test split, or every row when no split is assigned
        #[arg(long, value_enum)]
        split: Option<SplitFilter>,
    },
    /// Export normalized Gini importances per FFR_FD dimension
    Importance {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Per-dimension mean and variance differences between real and fake faces
    Diff {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitFilter,
    },
    /// Time FFR_FD construction per detector and forest training
    Bench {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Maximum number of faces to load
        #[arg(long, default_value_t = 100)]
        limit: usize,
        #[command(flatten)]
        detector: DetectorArgs,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Generate a synthetic corpus of real and region-blurred fake faces
    Synth {
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        n_real: usize,
        #[arg(long, default_value_t = 200)]
        n_fake: usize,
        #[arg(long, default_value_t = 5)]
        frames_per_video: usize,
        #[arg(long, default_value_t = 128)]
        size: u32,
        #[arg(long)]
        seed: Option<u64>,
        /// Fraction of videos assigned to the train split
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
}
