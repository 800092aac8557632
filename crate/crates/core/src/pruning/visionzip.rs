//! Dominant + contextual token selection in the style of VisionZip.
//!
//! Dominant tokens are the top-scoring ones. The remainder is summarized by a
//! small number of contextual tokens: targets are spaced evenly (in temporal
//! order) over the remaining tokens, every other remaining token joins the
//! target whose key vector is most cosine-similar, and each group is replaced
//! by the unweighted mean of its embeddings. This approximates the original
//! method; attention is not recomputed after the dominant tokens are removed.

use ndarray::{Array1, Array2, Array3};

use super::{top_k, Budget, PruneConfig, PruneResult, Strategy};
use crate::attention::TokenScores;
use crate::error::{Error, Result};
use crate::store::EmbeddingSequence;

/// Splits a budget of `k` into `(dominant, contextual)` counts:
/// `dominant = max(1, round(k / (1 + ratio)))`.
pub fn visionzip_budget(k: usize, contextual_ratio: f64) -> (usize, usize) {
    let dominant = ((k as f64 / (1.0 + contextual_ratio)).round() as usize).clamp(1, k.max(1));
    (dominant, k.saturating_sub(dominant))
}

/// `keys` is `H x N x Dh`; only needed when the contextual budget is non-zero.
pub fn visionzip_prune(
    scores: &TokenScores,
    keys: Option<&Array3<f64>>,
    embeddings: &EmbeddingSequence,
    cfg: &PruneConfig,
) -> Result<PruneResult> {
    cfg.check_ratio()?;
    let n = scores.n_tokens();
    if embeddings.n_tokens() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} scores but {} embeddings",
            n,
            embeddings.n_tokens()
        )));
    }
    let k = cfg.resolve_k(n)?;
    if k < 2 && cfg.contextual_ratio > 0.0 {
        return Err(Error::InvalidConfig(format!(
            "visionzip needs a budget of at least 2 with a non-zero contextual ratio, got {k}"
        )));
    }
    let (n_dominant, n_contextual) = visionzip_budget(k, cfg.contextual_ratio);

    let mut dominant_cfg = cfg.clone();
    dominant_cfg.budget = Budget::Count(n_dominant);
    let dominant = top_k(scores, &dominant_cfg)?;

    let mut result = PruneResult::new(
        Strategy::VisionZip,
        n,
        k,
        cfg.ordering,
        dominant.kept_indices,
    );
    if n_contextual == 0 {
        return Ok(result);
    }

    let keys = keys.ok_or(Error::MissingKeys)?;
    let (_, key_tokens, _) = keys.dim();
    if key_tokens != n {
        return Err(Error::ShapeMismatch(format!(
            "keys cover {key_tokens} tokens, scores {n}"
        )));
    }

    let mut is_dominant = vec![false; n];
    for &i in &result.kept_indices {
        is_dominant[i] = true;
    }
    let remaining: Vec<usize> = (0..n).filter(|&i| !is_dominant[i]).collect();
    let contextual = merge_remaining(&remaining, n_contextual, keys, embeddings.data());
    result = result.with_contextual_tokens(contextual);
    Ok(result)
}

/// Unit-normalized concatenation of a token's per-head keys; zero vectors
/// stay zero.
fn unit_key(keys: &Array3<f64>, token: usize) -> Array1<f64> {
    let (heads, _, head_dim) = keys.dim();
    let mut v = Array1::zeros(heads * head_dim);
    for h in 0..heads {
        for d in 0..head_dim {
            v[h * head_dim + d] = keys[[h, token, d]];
        }
    }
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

fn merge_remaining(
    remaining: &[usize],
    n_contextual: usize,
    keys: &Array3<f64>,
    embeddings: &Array2<f64>,
) -> Array2<f64> {
    let r = remaining.len();
    debug_assert!(n_contextual >= 1 && n_contextual <= r);

    // Centered, evenly spaced positions; spacing r/c >= 1 keeps them distinct.
    let target_pos: Vec<usize> = (0..n_contextual)
        .map(|j| (2 * j + 1) * r / (2 * n_contextual))
        .collect();
    let target_keys: Vec<Array1<f64>> = target_pos
        .iter()
        .map(|&p| unit_key(keys, remaining[p]))
        .collect();

    let dim = embeddings.ncols();
    let mut sums = Array2::<f64>::zeros((n_contextual, dim));
    let mut counts = vec![0usize; n_contextual];
    let mut next_target = 0;
    for (pos, &token) in remaining.iter().enumerate() {
        let group = if next_target < n_contextual && target_pos[next_target] == pos {
            next_target += 1;
            next_target - 1
        } else {
            let key = unit_key(keys, token);
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (j, t) in target_keys.iter().enumerate() {
                let sim = key.dot(t);
                if sim > best_sim {
                    best_sim = sim;
                    best = j;
                }
            }
            best
        };
        sums.row_mut(group).scaled_add(1.0, &embeddings.row(token));
        counts[group] += 1;
    }
    for (mut row, &count) in sums.outer_iter_mut().zip(&counts) {
        row /= count as f64;
    }
    sums
}
