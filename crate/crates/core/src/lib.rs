//! Token pruning for transformer audio representations.
//!
//! Scores every encoder output token by the attention it receives, selects a
//! subset with one of several strategies (plain top-k, segment-wise top-k,
//! VisionZip-style dominant + contextual merging, random and bottom-k
//! baselines), and measures what the selection keeps and what it saves at
//! inference time.
//!
//! ```
//! use segprune::{pruning, TokenScores};
//!
//! let scores = TokenScores::new(vec![0.9, 0.8, 0.1, 0.2, 0.3, 0.05]).unwrap();
//! let cfg = pruning::PruneConfig::segmentwise(3, 3)
//!     .with_ordering(pruning::KeptOrder::Temporal);
//! let kept = pruning::segmentwise_top_k(&scores, &cfg).unwrap();
//! assert_eq!(kept.kept_indices, vec![0, 3, 4]);
//! ```

pub mod attention;
pub mod cost;
pub mod error;
pub mod pruning;
pub mod rng;
pub mod store;
pub mod synth;

pub use attention::{aggregate_scores, scores_from_qk, softmax_attention, TokenScores};
pub use cost::{CostEstimate, ModelShape};
pub use error::{Error, Result};
pub use pruning::{KeptOrder, PruneConfig, PruneResult, Strategy};
pub use store::{AttentionTensor, Dtype, EmbeddingSequence, QkTensor, Tensor};
pub use synth::SynthSpec;
