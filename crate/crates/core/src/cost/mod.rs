//! Inference-cost model for a decoder consuming audio tokens.
//!
//! FLOPs are counted with one multiply-add = 2 FLOPs. Per layer, a prefill
//! over `n` context tokens costs
//!
//! * `8 n D^2` for the Q, K, V and output projections,
//! * `4 n^2 D` for the score (`Q K^T`) and value (`P V`) products,
//! * `4 n D Dff` for a two-matrix feed-forward block,
//!
//! and generating one token against a cache of `n` entries costs
//! `8 D^2 + 4 n D + 4 D Dff`. Norms, softmax, embeddings and the vocabulary head
//! are excluded.

mod bench;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bench::{bench_prefill, BenchStats, PrefillOperands, BENCH_SHAPE};

/// Audio tokens per second after the encoder: 100 mel frames/s, halved by
/// two-frame patching and again by stride-2 pooling.
pub const TOKENS_PER_SECOND: u64 = 25;

/// Audio duration to encoder output length: `floor(duration_s * 25)`.
pub fn audio_token_count(duration_s: f64) -> Result<u64> {
    if duration_s.is_nan() || duration_s < 0.0 {
        return Err(Error::NegativeDuration(duration_s));
    }
    // k * 0.04 * 25 can land a few ulps below k; snap before flooring.
    let raw = duration_s * TOKENS_PER_SECOND as f64;
    let snapped = raw.round();
    let tokens = if (raw - snapped).abs() <= 1e-9 * snapped.max(1.0) {
        snapped
    } else {
        raw.floor()
    };
    Ok(tokens as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_layers: u64,
    pub model_dim: u64,
    pub n_heads: u64,
    pub ffn_dim: u64,
}

impl Default for ModelShape {
    /// A 7B-class decoder: 32 layers, width 4096, 32 heads, FFN 11008.
    fn default() -> Self {
        Self {
            n_layers: 32,
            model_dim: 4096,
            n_heads: 32,
            ffn_dim: 11008,
        }
    }
}

impl ModelShape {
    pub fn new(n_layers: u64, model_dim: u64, n_heads: u64, ffn_dim: u64) -> Result<Self> {
        let shape = Self {
            n_layers,
            model_dim,
            n_heads,
            ffn_dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.model_dim == 0 || self.n_heads == 0 || self.ffn_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "model shape dimensions must be positive: {self:?}"
            )));
        }
        if !self.model_dim.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "model_dim {} is not divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> u64 {
        self.model_dim / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefillCost {
    pub projection_flops: u128,
    /// Score and value products, quadratic in the context length.
    pub attention_flops: u128,
    pub ffn_flops: u128,
}

impl PrefillCost {
    pub fn total(&self) -> u128 {
        self.projection_flops + self.attention_flops + self.ffn_flops
    }

    pub fn attention_share(&self) -> f64 {
        self.attention_flops as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeCost {
    /// Context-independent projection and FFN work.
    pub weight_flops: u128,
    /// Reads over the KV cache, linear in the context length.
    pub context_flops: u128,
}

impl DecodeCost {
    pub fn total(&self) -> u128 {
        self.weight_flops + self.context_flops
    }

    pub fn context_share(&self) -> f64 {
        self.context_flops as f64 / self.total() as f64
    }
}

/// Combined figures for one context length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub n_tokens: u64,
    pub prefill_flops: u128,
    pub attention_share: f64,
    pub decode_flops_per_token: u128,
}

fn check_context(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "context must hold at least one token".into(),
        ));
    }
    Ok(())
}

pub fn prefill_cost(n_context: u64, shape: &ModelShape) -> Result<PrefillCost> {
    check_context(n_context)?;
    shape.validate()?;
    let [l, n, d, dff] =
        [shape.n_layers, n_context, shape.model_dim, shape.ffn_dim].map(u128::from);
    Ok(PrefillCost {
        projection_flops: l * 8 * n * d * d,
        attention_flops: l * 4 * n * n * d,
        ffn_flops: l * 4 * n * d * dff,
    })
}

pub fn decode_cost(n_context: u64, shape: &ModelShape) -> Result<DecodeCost> {
    check_context(n_context)?;
    shape.validate()?;
    let [l, n, d, dff] =
        [shape.n_layers, n_context, shape.model_dim, shape.ffn_dim].map(u128::from);
    Ok(DecodeCost {
        weight_flops: l * (8 * d * d + 4 * d * dff),
        context_flops: l * 4 * n * d,
    })
}

pub fn estimate(n_context: u64, shape: &ModelShape) -> Result<CostEstimate> {
    let prefill = prefill_cost(n_context, shape)?;
    let decode = decode_cost(n_context, shape)?;
    Ok(CostEstimate {
        n_tokens: n_context,
        prefill_flops: prefill.total(),
        attention_share: prefill.attention_share(),
        decode_flops_per_token: decode.total(),
    })
}
