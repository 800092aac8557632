//! Per-head softmax attention and its reduction to one importance score per
//! token.
//!
//! The score of token `j` is the attention it receives: the column sum
//! `sum_i weights[h, i, j]`, averaged over heads. Because every query row
//! carries unit mass, the scores of a sequence of `N` tokens sum to `N`.

use ndarray::{s, Array3, Axis};

use crate::error::{Error, Result};
use crate::store::{AttentionTensor, Dtype, QkTensor, Tensor};

/// Non-negative importance score per token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenScores {
    scores: Vec<f64>,
}

impl TokenScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidScores("no tokens".into()));
        }
        if let Some((i, v)) = scores
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidScores(format!("score {v} at index {i}")));
        }
        // fold -0.0 into +0.0 so ranking by total order ignores the sign bit
        Ok(Self {
            scores: scores.into_iter().map(|v| v + 0.0).collect(),
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.scores.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.scores
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Scores divided by their maximum (all zeros if the maximum is zero).
    pub fn max_normalized(&self) -> Vec<f64> {
        let max = self.scores.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            self.scores.iter().map(|v| v / max).collect()
        } else {
            vec![0.0; self.scores.len()]
        }
    }
}

impl TokenScores {
    /// Scores as a `1 x N` float64 tensor.
    pub fn to_tensor(&self) -> Tensor {
        let data = ndarray::Array2::from_shape_vec((1, self.scores.len()), self.scores.clone())
            .expect("1 x N")
            .into_dyn();
        Tensor::new(data, Dtype::F64).expect("scores are finite")
    }
}

impl TryFrom<Tensor> for TokenScores {
    type Error = Error;

    /// Accepts a `1 x N` tensor.
    fn try_from(t: Tensor) -> Result<Self> {
        let m = t.into_array2()?;
        if m.nrows() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "scores must be 1 x N, got {} x {}",
                m.nrows(),
                m.ncols()
            )));
        }
        Self::new(m.into_iter().collect())
    }
}

/// Which axis of a query-by-key attention map is summed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AggregationAxis {
    /// Sum over queries: attention received by each token.
    #[default]
    Incoming,
    /// Sum over keys: attention paid by each token (always 1 per head for a
    /// valid tensor; kept for experimentation).
    Outgoing,
}

/// Row-wise softmax of `Q_h K_h^T / sqrt(Dh)` for every head, stabilized by
/// subtracting each row's maximum logit.
pub fn softmax_attention(qk: &QkTensor) -> AttentionTensor {
    let (heads, n, head_dim) = qk.queries().dim();
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut weights = Array3::<f64>::zeros((heads, n, n));
    for h in 0..heads {
        let q = qk.queries().slice(s![h, .., ..]);
        let k = qk.keys().slice(s![h, .., ..]);
        let mut plane = weights.index_axis_mut(Axis(0), h);
        plane.assign(&q.dot(&k.t()));
        for mut row in plane.outer_iter_mut() {
            row *= scale;
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
    }
    AttentionTensor::new_unchecked(weights)
}

/// Incoming attention per token, averaged over heads.
pub fn aggregate_scores(attn: &AttentionTensor) -> TokenScores {
    aggregate_scores_along(attn, AggregationAxis::Incoming)
}

pub fn aggregate_scores_along(attn: &AttentionTensor, axis: AggregationAxis) -> TokenScores {
    let w = attn.weights();
    // each head plane is indexed (query, key)
    let plane_axis = match axis {
        AggregationAxis::Incoming => Axis(0),
        AggregationAxis::Outgoing => Axis(1),
    };
    let heads = attn.n_heads() as f64;
    let mut acc = vec![0.0f64; attn.n_tokens()];
    for plane in w.outer_iter() {
        let per_head = plane.sum_axis(plane_axis);
        for (a, v) in acc.iter_mut().zip(per_head.iter()) {
            *a += v;
        }
    }
    TokenScores {
        scores: acc.into_iter().map(|v| v / heads).collect(),
    }
}

/// `aggregate_scores(softmax_attention(qk))`.
pub fn scores_from_qk(qk: &QkTensor) -> TokenScores {
    aggregate_scores(&softmax_attention(qk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn single_token() {
        let qk = QkTensor::new(
            Array3::from_elem((3, 1, 4), 2.5),
            Array3::from_elem((3, 1, 4), -7.0),
        )
        .unwrap();
        let attn = softmax_attention(&qk);
        assert_eq!(attn.weights().as_slice().unwrap(), &[1.0, 1.0, 1.0]);
        assert_eq!(scores_from_qk(&qk).as_slice(), &[1.0]);
    }

    #[test]
    fn zero_queries_give_uniform_rows() {
        let keys = Array3::from_shape_fn((2, 4, 3), |(h, n, d)| (h + 2 * n) as f64 - d as f64);
        let qk = QkTensor::new(Array3::zeros((2, 4, 3)), keys).unwrap();
        let attn = softmax_attention(&qk);
        assert!(attn.weights().iter().all(|&w| w == 0.25));
        assert_eq!(scores_from_qk(&qk).as_slice(), &[1.0; 4]);
    }

    #[test]
    fn uniform_attention_scores() {
        let attn = AttentionTensor::new(Array3::from_elem((3, 4, 4), 0.25)).unwrap();
        assert_eq!(aggregate_scores(&attn).as_slice(), &[1.0; 4]);
    }

    #[test]
    fn large_logits_stay_row_stochastic() {
        let q = Array3::from_shape_fn((1, 3, 1), |(_, i, _)| [1e4, -1e4, 0.0][i]);
        let k = Array3::from_shape_fn((1, 3, 1), |(_, j, _)| [1.0, -1.0, 0.5][j]);
        let attn = softmax_attention(&QkTensor::new(q, k).unwrap());
        assert!(attn.weights().iter().all(|v| v.is_finite()));
        assert!(AttentionTensor::new(attn.into_weights()).is_ok());
    }

    #[test]
    fn outgoing_axis_is_all_ones() {
        let mut w = Array3::zeros((1, 3, 3));
        w[[0, 0, 0]] = 1.0;
        w[[0, 1, 0]] = 1.0;
        w[[0, 2, 1]] = 1.0;
        let attn = AttentionTensor::new(w).unwrap();
        assert_eq!(aggregate_scores(&attn).as_slice(), &[2.0, 1.0, 0.0]);
        assert_eq!(
            aggregate_scores_along(&attn, AggregationAxis::Outgoing).as_slice(),
            &[1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn score_validation() {
        assert!(TokenScores::new(vec![]).is_err());
        assert!(TokenScores::new(vec![1.0, -0.1]).is_err());
        assert!(TokenScores::new(vec![f64::INFINITY]).is_err());
        let z = TokenScores::new(vec![-0.0]).unwrap();
        assert!(z.as_slice()[0].is_sign_positive());
        assert_eq!(
            TokenScores::new(vec![1.0, 4.0, 2.0])
                .unwrap()
                .max_normalized(),
            vec![0.25, 1.0, 0.5]
        );
    }
}
