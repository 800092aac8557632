//! Synthetic attention maps and embeddings with a few dominant, temporally
//! clustered tokens.
//!
//! Hot tokens sit in contiguous clusters of `cluster_width` tokens at seeded
//! positions, separated by at least one cold token. Every query row of every
//! head gives exactly `concentration` of its mass to the hot tokens, so the hot
//! tokens' aggregated scores sum to `concentration * N`. Within each block the
//! mass follows a softmax over
//!
//! * a per-token salience drawn once (shared by rows and heads),
//! * a per-entry perturbation, both scaled by `noise_scale`,
//! * for cold tokens, a halo `halo_strength * exp(-(d - 1) / halo_width)` where
//!   `d` is the distance to the nearest hot token, so neighbours of a cluster
//!   also receive elevated attention.

use std::ops::Range;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::store::{AttentionTensor, EmbeddingSequence};

/// Scale of the shared cluster direction relative to unit per-token noise.
const CLUSTER_SIGNAL: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_tokens: usize,
    pub n_heads: usize,
    pub n_hot: usize,
    pub cluster_width: usize,
    pub concentration: f64,
    pub noise_scale: f64,
    pub halo_strength: f64,
    pub halo_width: f64,
    pub seed: u64,
    pub dim: usize,
}

impl Default for SynthSpec {
    /// 30 s of audio at 25 tokens/s with 30 hot tokens in clusters of 10.
    fn default() -> Self {
        Self {
            n_tokens: 750,
            n_heads: 4,
            n_hot: 30,
            cluster_width: 10,
            concentration: 0.8,
            noise_scale: 0.1,
            halo_strength: 3.0,
            halo_width: 15.0,
            seed: 0,
            dim: 64,
        }
    }
}

impl SynthSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_clusters(&self) -> usize {
        self.n_hot.div_ceil(self.cluster_width.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_tokens == 0 || self.n_heads == 0 || self.dim == 0 {
            return bad("n_tokens, n_heads and dim must be positive".into());
        }
        if self.cluster_width == 0 {
            return bad("cluster_width must be at least 1".into());
        }
        if !(self.concentration > 0.0 && self.concentration < 1.0) {
            return bad(format!(
                "concentration must be in (0, 1), got {}",
                self.concentration
            ));
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("halo_strength", self.halo_strength),
            ("halo_width", self.halo_width),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        let needed = self.n_hot + self.n_clusters().saturating_sub(1);
        if needed > self.n_tokens {
            return Err(Error::InfeasibleSpec(format!(
                "{} hot tokens in {} separated clusters need {} positions, have {}",
                self.n_hot,
                self.n_clusters(),
                needed,
                self.n_tokens
            )));
        }
        Ok(())
    }
}

/// Token ranges of the hot clusters, in increasing order.
pub fn hot_clusters(spec: &SynthSpec) -> Result<Vec<Range<usize>>> {
    spec.validate()?;
    let m = spec.n_clusters();
    if m == 0 {
        return Ok(Vec::new());
    }
    let sizes: Vec<usize> = (0..m)
        .map(|c| spec.cluster_width.min(spec.n_hot - c * spec.cluster_width))
        .collect();
    // Slack left after the clusters and their mandatory one-token gaps is
    // split at m sorted uniform cut points.
    let slack = (spec.n_tokens - spec.n_hot - (m - 1)) as u64;
    let mut rng = rng::seeded(spec.seed, stream::SYNTH_PLACEMENT);
    let mut cuts: Vec<usize> = (0..m)
        .map(|_| rng::below(&mut rng, slack + 1) as usize)
        .collect();
    cuts.sort_unstable();

    let mut before = 0;
    Ok(cuts
        .iter()
        .zip(&sizes)
        .enumerate()
        .map(|(c, (&cut, &size))| {
            let start = cut + before + c;
            before += size;
            start..start + size
        })
        .collect())
}

fn hot_mask(spec: &SynthSpec, clusters: &[Range<usize>]) -> Vec<bool> {
    let mut hot = vec![false; spec.n_tokens];
    for r in clusters {
        hot[r.clone()].iter_mut().for_each(|h| *h = true);
    }
    hot
}

/// Distance from each token to the nearest hot token (`usize::MAX` if none).
fn distance_to_hot(hot: &[bool]) -> Vec<usize> {
    let n = hot.len();
    let mut dist = vec![usize::MAX; n];
    let mut last = None;
    for i in 0..n {
        if hot[i] {
            last = Some(i);
        }
        if let Some(j) = last {
            dist[i] = i - j;
        }
    }
    last = None;
    for i in (0..n).rev() {
        if hot[i] {
            last = Some(i);
        }
        if let Some(j) = last {
            dist[i] = dist[i].min(j - i);
        }
    }
    dist
}

pub fn gen_attention(spec: &SynthSpec) -> Result<AttentionTensor> {
    let clusters = hot_clusters(spec)?;
    let n = spec.n_tokens;
    let hot = hot_mask(spec, &clusters);
    let dist = distance_to_hot(&hot);
    let mut rng = rng::seeded(spec.seed, stream::SYNTH_ATTENTION);

    let base: Vec<f64> = (0..n)
        .map(|j| {
            let salience = spec.noise_scale * rng.sample::<f64, _>(StandardNormal);
            let halo = if hot[j] || dist[j] == usize::MAX || spec.halo_width == 0.0 {
                0.0
            } else {
                spec.halo_strength * (-((dist[j] - 1) as f64) / spec.halo_width).exp()
            };
            salience + halo
        })
        .collect();

    let n_hot = hot.iter().filter(|&&h| h).count();
    let (hot_mass, cold_mass) = match n_hot {
        0 => (0.0, 1.0),
        k if k == n => (1.0, 0.0),
        _ => (spec.concentration, 1.0 - spec.concentration),
    };

    let mut weights = Array3::<f64>::zeros((spec.n_heads, n, n));
    let mut logits = vec![0.0f64; n];
    for mut plane in weights.outer_iter_mut() {
        for mut row in plane.outer_iter_mut() {
            for (l, b) in logits.iter_mut().zip(&base) {
                *l = b + spec.noise_scale * rng.sample::<f64, _>(StandardNormal);
            }
            let (mut max_hot, mut max_cold) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (l, &h) in logits.iter().zip(&hot) {
                if h {
                    max_hot = max_hot.max(*l);
                } else {
                    max_cold = max_cold.max(*l);
                }
            }
            let (mut sum_hot, mut sum_cold) = (0.0, 0.0);
            for (l, &h) in logits.iter_mut().zip(&hot) {
                if h {
                    *l = (*l - max_hot).exp();
                    sum_hot += *l;
                } else {
                    *l = (*l - max_cold).exp();
                    sum_cold += *l;
                }
            }
            for ((w, l), &h) in row.iter_mut().zip(&logits).zip(&hot) {
                *w = if h {
                    hot_mass * l / sum_hot
                } else {
                    cold_mass * l / sum_cold
                };
            }
        }
    }
    AttentionTensor::new(weights)
}

/// Gaussian embeddings; tokens of one hot cluster share a random mean
/// direction.
pub fn gen_embeddings(spec: &SynthSpec) -> Result<EmbeddingSequence> {
    let clusters = hot_clusters(spec)?;
    let mut rng = rng::seeded(spec.seed, stream::SYNTH_EMBEDDINGS);
    let means: Vec<Vec<f64>> = clusters
        .iter()
        .map(|_| {
            (0..spec.dim)
                .map(|_| CLUSTER_SIGNAL * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut cluster_of = vec![None; spec.n_tokens];
    for (c, r) in clusters.iter().enumerate() {
        for i in r.clone() {
            cluster_of[i] = Some(c);
        }
    }
    let mut data = Array2::<f64>::zeros((spec.n_tokens, spec.dim));
    for (i, mut row) in data.outer_iter_mut().enumerate() {
        for (d, v) in row.iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            *v = noise + cluster_of[i].map_or(0.0, |c| means[c][d]);
        }
    }
    EmbeddingSequence::new(data)
}

/// Splits embedding columns into `n_heads` contiguous per-head key blocks,
/// `H x N x (D / H)`; trailing columns that do not fill a head are dropped.
pub fn keys_from_embeddings(embeddings: &EmbeddingSequence, n_heads: usize) -> Result<Array3<f64>> {
    if n_heads == 0 || embeddings.dim() < n_heads {
        return Err(Error::InvalidConfig(format!(
            "cannot split dimension {} into {} heads",
            embeddings.dim(),
            n_heads
        )));
    }
    let head_dim = embeddings.dim() / n_heads;
    let data = embeddings.data();
    Ok(Array3::from_shape_fn(
        (n_heads, embeddings.n_tokens(), head_dim),
        |(h, t, d)| data[[t, h * head_dim + d]],
    ))
}
