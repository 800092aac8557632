use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "segprune",
    version,
    about = "Attention-based token pruning pipelines"
)]
pub struct Cli {
    /// TOML file with one table per subcommand; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn queries/keys or attention weights into per-token scores.
    Aggregate(AggregateArgs),
    /// Select tokens from a score vector and write the pruned embeddings.
    Prune(PruneArgs),
    /// Generate synthetic attention, embeddings and keys.
    Synth(SynthArgs),
    /// Coverage metrics of a saved selection.
    Metrics(MetricsArgs),
    /// Analytic prefill and decode FLOPs.
    Estimate(EstimateArgs),
    /// Time one layer's prefill matmuls.
    Bench(BenchArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

// Every field is optional so that values can come from either the command line
// or the config file; defaults are applied after merging.

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct AggregateArgs {
    /// Stacked queries and keys, shape 2 x H x N x Dh.
    #[arg(long, value_name = "PATH", conflicts_with = "attn")]
    pub qk: Option<PathBuf>,
    /// Attention weights, shape H x N x N.
    #[arg(long, value_name = "PATH")]
    pub attn: Option<PathBuf>,
    /// Output scores (1 x N npy); a CSV and manifest are written beside it.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// incoming (attention received, default) or outgoing.
    #[arg(long)]
    pub axis: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PruneArgs {
    /// Token scores, 1 x N npy.
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
    /// Token embeddings, N x D npy.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    /// Per-head keys, H x N x Dh npy (visionzip).
    #[arg(long, value_name = "PATH", conflicts_with = "qk")]
    pub keys: Option<PathBuf>,
    /// Stacked queries and keys; only the keys are used (visionzip).
    #[arg(long, value_name = "PATH")]
    pub qk: Option<PathBuf>,
    /// top_k, segmentwise_top_k, visionzip, random, bottom_k or identity.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Number of tokens to keep.
    #[arg(long, conflicts_with = "rate")]
    pub k: Option<usize>,
    /// Fraction of tokens to keep.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub segments: Option<usize>,
    /// descending_attention or temporal.
    #[arg(long)]
    pub ordering: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// strict or greedy_fill.
    #[arg(long)]
    pub remainder: Option<String>,
    #[arg(long)]
    pub contextual_ratio: Option<f64>,
    /// Segments used for the occupancy metric; defaults to --segments.
    #[arg(long)]
    pub eval_segments: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_tokens: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub n_hot: Option<usize>,
    #[arg(long)]
    pub cluster_width: Option<usize>,
    #[arg(long)]
    pub concentration: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub halo_strength: Option<f64>,
    #[arg(long)]
    pub halo_width: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    /// Saved selection (result.json).
    #[arg(long, value_name = "PATH")]
    pub result: Option<PathBuf>,
    /// Scores the selection was made from, 1 x N npy.
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ShapeArgs {
    #[arg(long)]
    pub n_layers: Option<u64>,
    #[arg(long)]
    pub model_dim: Option<u64>,
    #[arg(long)]
    pub n_heads: Option<u64>,
    #[arg(long)]
    pub ffn_dim: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shape: ShapeArgs,
    /// Context lengths, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n_tokens: Option<Vec<u64>>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shape: ShapeArgs,
    /// Context lengths, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n_tokens: Option<Vec<u64>>,
    /// Timed repetitions per length (at least 3).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded locations.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}
