use serde::{Deserialize, Serialize};

use super::{segment_partition, PruneResult};
use crate::attention::TokenScores;
use crate::error::{Error, Result};

/// Coverage of a selection, as proxies for how much of the signal survives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    /// Share of the total score held by kept tokens, in `[0, 1]`.
    pub attention_mass_captured: f64,
    /// Share of evaluation segments holding at least one kept token.
    pub segment_occupancy: f64,
    /// Largest index distance between temporally consecutive kept tokens.
    /// 0 for a single kept token, `N` when nothing is kept.
    pub max_temporal_gap: usize,
}

/// Contextual (merged) tokens do not count towards any of the metrics.
pub fn coverage_metrics(
    result: &PruneResult,
    scores: &TokenScores,
    eval_segments: usize,
) -> Result<CoverageMetrics> {
    let n = scores.n_tokens();
    if result.n_tokens_in != n {
        return Err(Error::ShapeMismatch(format!(
            "result covers {} tokens, scores {}",
            result.n_tokens_in, n
        )));
    }
    result.validate_indices()?;
    let partition = segment_partition(n, eval_segments)?;

    let s = scores.as_slice();
    let total = scores.total();
    let kept_mass: f64 = result.kept_indices.iter().map(|&i| s[i]).sum();
    let attention_mass_captured = if total > 0.0 {
        (kept_mass / total).min(1.0)
    } else {
        0.0
    };

    let mut occupied = vec![false; eval_segments];
    for &i in &result.kept_indices {
        occupied[partition.segment_of(i)] = true;
    }
    let segment_occupancy = occupied.iter().filter(|&&o| o).count() as f64 / eval_segments as f64;

    let temporal = result.temporal_indices();
    let max_temporal_gap = if temporal.is_empty() {
        n
    } else {
        temporal.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    };

    Ok(CoverageMetrics {
        attention_mass_captured,
        segment_occupancy,
        max_temporal_gap,
    })
}
