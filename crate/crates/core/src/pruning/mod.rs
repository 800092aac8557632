//! Token-selection strategies.
//!
//! Every strategy ranks tokens with the same total order: higher score first,
//! and among equal scores the lower (earlier) index wins. Selection results are
//! plain index lists so they can be serialized, compared and applied to any
//! embedding sequence of matching length.

mod config;
mod metrics;
mod segment;
mod visionzip;

use std::cmp::Ordering;

use ndarray::{Array2, Array3, Axis};

use crate::attention::TokenScores;
use crate::error::{Error, Result};
use crate::rng;
use crate::store::EmbeddingSequence;

pub use config::{
    Budget, KeptOrder, PruneConfig, RemainderPolicy, Strategy, DEFAULT_CONTEXTUAL_RATIO,
    DEFAULT_SEGMENTS,
};
pub use metrics::{coverage_metrics, CoverageMetrics};
pub use segment::{segment_partition, SegmentPartition};
pub use visionzip::{visionzip_budget, visionzip_prune};

/// Output of a selection strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    pub strategy: Strategy,
    pub n_tokens_in: usize,
    pub k_requested: usize,
    /// Segment count, for segment-wise selection only.
    pub segments: Option<usize>,
    pub ordering: KeptOrder,
    pub kept_indices: Vec<usize>,
    /// Merged tokens appended after the kept ones (VisionZip-style only).
    pub contextual_tokens: Option<Array2<f64>>,
    /// Contextual count for results read back from JSON, where the merged
    /// embeddings themselves are not stored.
    pub(crate) declared_contextual: usize,
}

impl PruneResult {
    pub fn new(
        strategy: Strategy,
        n_tokens_in: usize,
        k_requested: usize,
        ordering: KeptOrder,
        kept_indices: Vec<usize>,
    ) -> Self {
        Self {
            strategy,
            n_tokens_in,
            k_requested,
            segments: None,
            ordering,
            kept_indices,
            contextual_tokens: None,
            declared_contextual: 0,
        }
    }

    pub fn with_contextual_tokens(mut self, tokens: Array2<f64>) -> Self {
        self.declared_contextual = tokens.nrows();
        self.contextual_tokens = Some(tokens);
        self
    }

    pub fn contextual_count(&self) -> usize {
        self.contextual_tokens
            .as_ref()
            .map_or(self.declared_contextual, |c| c.nrows())
    }

    /// Kept tokens plus contextual tokens.
    pub fn k_kept(&self) -> usize {
        self.kept_indices.len() + self.contextual_count()
    }

    /// Kept indices in increasing order.
    pub fn temporal_indices(&self) -> Vec<usize> {
        let mut idx = self.kept_indices.clone();
        idx.sort_unstable();
        idx
    }

    pub(crate) fn validate_indices(&self) -> Result<()> {
        let mut seen = vec![false; self.n_tokens_in];
        for &i in &self.kept_indices {
            if i >= self.n_tokens_in {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    n: self.n_tokens_in,
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        Ok(())
    }
}

/// Descending-score order with ties broken by lower index.
pub(crate) fn by_descending(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

fn by_ascending(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b))
}

/// First `k` of `candidates` under `cmp`, in `cmp` order.
fn best_k<F>(mut candidates: Vec<usize>, k: usize, cmp: F) -> Vec<usize>
where
    F: Fn(&usize, &usize) -> Ordering,
{
    if k == 0 {
        return Vec::new();
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(&cmp);
    candidates
}

fn arrange(mut indices: Vec<usize>, ordering: KeptOrder, scores: &[f64]) -> Vec<usize> {
    match ordering {
        KeptOrder::Temporal => indices.sort_unstable(),
        KeptOrder::DescendingAttention => indices.sort_unstable_by(by_descending(scores)),
    }
    indices
}

/// The `K` highest-scoring tokens.
pub fn top_k(scores: &TokenScores, cfg: &PruneConfig) -> Result<PruneResult> {
    let n = scores.n_tokens();
    let k = cfg.resolve_k(n)?;
    let s = scores.as_slice();
    let kept = best_k((0..n).collect(), k, by_descending(s));
    Ok(PruneResult::new(
        Strategy::TopK,
        n,
        k,
        cfg.ordering,
        arrange(kept, cfg.ordering, s),
    ))
}

/// The `K` lowest-scoring tokens.
pub fn bottom_k(scores: &TokenScores, cfg: &PruneConfig) -> Result<PruneResult> {
    let n = scores.n_tokens();
    let k = cfg.resolve_k(n)?;
    let s = scores.as_slice();
    let kept = best_k((0..n).collect(), k, by_ascending(s));
    Ok(PruneResult::new(
        Strategy::BottomK,
        n,
        k,
        cfg.ordering,
        arrange(kept, cfg.ordering, s),
    ))
}

/// Splits the sequence into `cfg.segments` contiguous segments and keeps the
/// `floor(K/S)` best tokens of each, ranked by their score over the whole
/// sequence. With one segment this is exactly [`top_k`].
pub fn segmentwise_top_k(scores: &TokenScores, cfg: &PruneConfig) -> Result<PruneResult> {
    let n = scores.n_tokens();
    let k = cfg.resolve_k(n)?;
    let partition = segment_partition(n, cfg.segments)?;
    let s = scores.as_slice();
    let quota = k / cfg.segments;

    let mut kept = Vec::with_capacity(k);
    for range in partition.segments() {
        let take = quota.min(range.len());
        kept.extend(best_k(range.collect(), take, by_descending(s)));
    }

    if cfg.remainder == RemainderPolicy::GreedyFill && kept.len() < k {
        let mut taken = vec![false; n];
        for &i in &kept {
            taken[i] = true;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        kept.extend(best_k(rest, k - kept.len(), by_descending(s)));
    }

    let mut result = PruneResult::new(
        Strategy::SegmentwiseTopK,
        n,
        k,
        cfg.ordering,
        arrange(kept, cfg.ordering, s),
    );
    result.segments = Some(cfg.segments);
    Ok(result)
}

/// `K` tokens drawn uniformly without replacement, listed in temporal order.
pub fn random_prune(n: usize, cfg: &PruneConfig) -> Result<PruneResult> {
    let k = cfg.resolve_k(n)?;
    let mut kept = rng::sample_indices(cfg.seed, n, k);
    kept.sort_unstable();
    Ok(PruneResult::new(
        Strategy::Random,
        n,
        k,
        KeptOrder::Temporal,
        kept,
    ))
}

/// Keeps every token in its original order.
pub fn identity(n: usize) -> PruneResult {
    PruneResult::new(
        Strategy::Identity,
        n,
        n,
        KeptOrder::Temporal,
        (0..n).collect(),
    )
}

/// Optional inputs that only some strategies need.
#[derive(Debug, Clone, Copy, Default)]
pub struct PruneInputs<'a> {
    /// Per-head keys, `H x N x Dh`.
    pub keys: Option<&'a Array3<f64>>,
    pub embeddings: Option<&'a EmbeddingSequence>,
}

/// Runs the strategy named in `cfg`.
pub fn prune(
    scores: &TokenScores,
    cfg: &PruneConfig,
    inputs: PruneInputs<'_>,
) -> Result<PruneResult> {
    match cfg.strategy {
        Strategy::TopK => top_k(scores, cfg),
        Strategy::SegmentwiseTopK => segmentwise_top_k(scores, cfg),
        Strategy::BottomK => bottom_k(scores, cfg),
        Strategy::Random => random_prune(scores.n_tokens(), cfg),
        Strategy::Identity => Ok(identity(scores.n_tokens())),
        Strategy::VisionZip => {
            let embeddings = inputs.embeddings.ok_or(Error::MissingEmbeddings)?;
            visionzip_prune(scores, inputs.keys, embeddings, cfg)
        }
    }
}

/// Gathers the kept rows in result order and appends any contextual tokens.
pub fn apply_selection(
    embeddings: &EmbeddingSequence,
    result: &PruneResult,
) -> Result<EmbeddingSequence> {
    if result.n_tokens_in != embeddings.n_tokens() {
        return Err(Error::ShapeMismatch(format!(
            "result covers {} tokens, embeddings have {}",
            result.n_tokens_in,
            embeddings.n_tokens()
        )));
    }
    result.validate_indices()?;
    if result.contextual_tokens.is_none() && result.declared_contextual > 0 {
        return Err(Error::ShapeMismatch(
            "result declares contextual tokens but carries none".into(),
        ));
    }
    let mut out = embeddings.data().select(Axis(0), &result.kept_indices);
    if let Some(ctx) = &result.contextual_tokens {
        if ctx.ncols() != embeddings.dim() {
            return Err(Error::ShapeMismatch(format!(
                "contextual tokens have dimension {}, embeddings {}",
                ctx.ncols(),
                embeddings.dim()
            )));
        }
        out = ndarray::concatenate(Axis(0), &[out.view(), ctx.view()])
            .expect("column counts checked");
    }
    if out.nrows() == 0 {
        return Err(Error::EmptySelection);
    }
    EmbeddingSequence::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scores(v: &[f64]) -> TokenScores {
        TokenScores::new(v.to_vec()).unwrap()
    }

    #[test]
    fn top_k_examples() {
        let s = scores(&[0.1, 0.9, 0.5]);
        assert_eq!(
            top_k(&s, &PruneConfig::top_k(2)).unwrap().kept_indices,
            vec![1, 2]
        );

        let tied = scores(&[0.4, 0.4, 0.4, 0.1]);
        assert_eq!(
            top_k(&tied, &PruneConfig::top_k(2)).unwrap().kept_indices,
            vec![0, 1]
        );

        let full = top_k(&s, &PruneConfig::top_k(3)).unwrap();
        assert_eq!(full.kept_indices, vec![1, 2, 0]);
        let full_temporal = top_k(
            &s,
            &PruneConfig::top_k(3).with_ordering(KeptOrder::Temporal),
        )
        .unwrap();
        assert_eq!(full_temporal.kept_indices, vec![0, 1, 2]);
    }

    #[test]
    fn budget_errors() {
        let s = scores(&[0.1, 0.9, 0.5]);
        assert!(matches!(
            top_k(&s, &PruneConfig::top_k(0)),
            Err(Error::ZeroBudget)
        ));
        assert!(matches!(
            top_k(&s, &PruneConfig::top_k(4)),
            Err(Error::BudgetExceedsTokens { .. })
        ));
        assert!(matches!(
            segmentwise_top_k(&s, &PruneConfig::segmentwise(2, 4)),
            Err(Error::SegmentsExceedTokens { .. })
        ));
        assert!(bottom_k(&s, &PruneConfig::new(Strategy::BottomK, Budget::Count(4))).is_err());
        assert!(random_prune(3, &PruneConfig::new(Strategy::Random, Budget::Count(4))).is_err());
    }

    #[test]
    fn bottom_k_examples() {
        let s = scores(&[0.1, 0.9, 0.5]);
        let cfg = PruneConfig::new(Strategy::BottomK, Budget::Count(1));
        assert_eq!(bottom_k(&s, &cfg).unwrap().kept_indices, vec![0]);
        let cfg = PruneConfig::new(Strategy::BottomK, Budget::Count(3));
        let mut all = bottom_k(&s, &cfg).unwrap().kept_indices;
        // descending attention order even though selection is from the bottom
        assert_eq!(all, vec![1, 2, 0]);
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
    }

    #[test]
    fn segmentwise_example() {
        let s = scores(&[0.9, 0.8, 0.1, 0.2, 0.3, 0.05]);
        let cfg = PruneConfig::segmentwise(3, 3).with_ordering(KeptOrder::Temporal);
        let r = segmentwise_top_k(&s, &cfg).unwrap();
        assert_eq!(r.kept_indices, vec![0, 3, 4]);
        assert_eq!(r.segments, Some(3));

        let desc = segmentwise_top_k(&s, &PruneConfig::segmentwise(3, 3)).unwrap();
        assert_eq!(desc.kept_indices, vec![0, 4, 3]);
    }

    #[test]
    fn segmentwise_remainder_policies() {
        // N=10, S=3 (sizes 4,3,3), K=8: quota 2 per segment, 2 left over.
        let s = scores(&[9., 8., 7., 6., 0.5, 0.4, 0.3, 0.2, 0.1, 0.05]);
        let strict = segmentwise_top_k(&s, &PruneConfig::segmentwise(8, 3)).unwrap();
        assert_eq!(strict.temporal_indices(), vec![0, 1, 4, 5, 7, 8]);
        assert_eq!(strict.k_kept(), 6);

        let fill = segmentwise_top_k(
            &s,
            &PruneConfig::segmentwise(8, 3).with_remainder(RemainderPolicy::GreedyFill),
        )
        .unwrap();
        assert_eq!(fill.temporal_indices(), vec![0, 1, 2, 3, 4, 5, 7, 8]);

        // K=5, S=3 on N=5 (sizes 2,2,1): quota 1, two tokens of budget left over
        let s = scores(&[1., 2., 3., 4., 5.]);
        let strict = segmentwise_top_k(&s, &PruneConfig::segmentwise(5, 3)).unwrap();
        assert_eq!(strict.temporal_indices(), vec![1, 3, 4]);
        let fill = segmentwise_top_k(
            &s,
            &PruneConfig::segmentwise(5, 3).with_remainder(RemainderPolicy::GreedyFill),
        )
        .unwrap();
        assert_eq!(fill.temporal_indices(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn segmentwise_quota_zero_keeps_nothing_under_strict() {
        let s = scores(&[1., 2., 3., 4.]);
        let r = segmentwise_top_k(&s, &PruneConfig::segmentwise(3, 4)).unwrap();
        assert!(r.kept_indices.is_empty());
        let emb = EmbeddingSequence::new(Array2::zeros((4, 2))).unwrap();
        assert!(matches!(
            apply_selection(&emb, &r),
            Err(Error::EmptySelection)
        ));
    }

    #[test]
    fn fig1_one_per_triple() {
        let s = scores(&[0.3, 0.1, 0.2, 0.0, 0.9, 0.8, 0.5, 0.5, 0.6]);
        let r = segmentwise_top_k(
            &s,
            &PruneConfig::segmentwise(3, 3).with_ordering(KeptOrder::Temporal),
        )
        .unwrap();
        assert_eq!(r.kept_indices, vec![0, 4, 8]);
    }

    #[test]
    fn random_is_seeded_and_temporal() {
        let cfg = PruneConfig::new(Strategy::Random, Budget::Count(4)).with_seed(11);
        let a = random_prune(10, &cfg).unwrap();
        let b = random_prune(10, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.kept_indices.windows(2).all(|w| w[0] < w[1]));
        let all = random_prune(10, &PruneConfig::new(Strategy::Random, Budget::Count(10))).unwrap();
        assert_eq!(all.kept_indices, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn apply_examples() {
        let emb = EmbeddingSequence::new(array![[1., 1.], [2., 2.], [3., 3.]]).unwrap();
        assert_eq!(apply_selection(&emb, &identity(3)).unwrap(), emb);

        let r = PruneResult::new(
            Strategy::TopK,
            3,
            2,
            KeptOrder::DescendingAttention,
            vec![2, 0],
        );
        assert_eq!(
            apply_selection(&emb, &r).unwrap().data(),
            &array![[3., 3.], [1., 1.]]
        );

        let with_ctx = PruneResult::new(Strategy::VisionZip, 3, 3, KeptOrder::Temporal, vec![0, 2])
            .with_contextual_tokens(array![[7., 8.]]);
        let out = apply_selection(&emb, &with_ctx).unwrap();
        assert_eq!(out.n_tokens(), 3);
        assert_eq!(out.n_tokens(), with_ctx.k_kept());
        assert_eq!(out.data().row(2), array![7., 8.]);
    }

    #[test]
    fn apply_errors() {
        let emb = EmbeddingSequence::new(array![[1., 1.], [2., 2.], [3., 3.]]).unwrap();
        let out_of_range = PruneResult::new(Strategy::TopK, 3, 1, KeptOrder::Temporal, vec![3]);
        assert!(matches!(
            apply_selection(&emb, &out_of_range),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
        let bad_dim = PruneResult::new(Strategy::VisionZip, 3, 2, KeptOrder::Temporal, vec![0])
            .with_contextual_tokens(array![[1., 2., 3.]]);
        assert!(matches!(
            apply_selection(&emb, &bad_dim),
            Err(Error::ShapeMismatch(_))
        ));
        let wrong_n = identity(4);
        assert!(apply_selection(&emb, &wrong_n).is_err());
    }

    #[test]
    fn dispatcher_requires_visionzip_inputs() {
        let s = scores(&[0.1, 0.9, 0.5, 0.2]);
        // round(4 / 1.18) = 3 dominant, 1 contextual
        let cfg = PruneConfig::new(Strategy::VisionZip, Budget::Count(4));
        assert!(matches!(
            prune(&s, &cfg, PruneInputs::default()),
            Err(Error::MissingEmbeddings)
        ));
        let emb = EmbeddingSequence::new(Array2::zeros((4, 2))).unwrap();
        let inputs = PruneInputs {
            keys: None,
            embeddings: Some(&emb),
        };
        assert!(matches!(prune(&s, &cfg, inputs), Err(Error::MissingKeys)));
    }
}
