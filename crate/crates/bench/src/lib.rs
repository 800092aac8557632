//! Shared fixtures for the benchmark harnesses.

use ndarray::Array3;
use segprune::attention::aggregate_scores;
use segprune::synth::{gen_attention, gen_embeddings, keys_from_embeddings};
use segprune::{EmbeddingSequence, QkTensor, SynthSpec, TokenScores};

/// Synthetic scores, embeddings and keys for one clip of `n_tokens` tokens.
pub struct Fixture {
    pub scores: TokenScores,
    pub embeddings: EmbeddingSequence,
    pub keys: Array3<f64>,
}

pub fn fixture(n_tokens: usize, seed: u64) -> Fixture {
    let spec = SynthSpec {
        n_tokens,
        ..SynthSpec::default()
    }
    .with_seed(seed);
    let scores = aggregate_scores(&gen_attention(&spec).expect("valid spec"));
    let embeddings = gen_embeddings(&spec).expect("valid spec");
    let keys = keys_from_embeddings(&embeddings, spec.n_heads).expect("dim divisible by heads");
    Fixture {
        scores,
        embeddings,
        keys,
    }
}

/// Queries and keys drawn from the fixture embeddings, `H x N x D/H` each.
pub fn qk(n_tokens: usize, seed: u64) -> QkTensor {
    let f = fixture(n_tokens, seed);
    let q = f.keys.mapv(|v| 0.5 * v);
    QkTensor::new(q, f.keys).expect("matching shapes")
}
