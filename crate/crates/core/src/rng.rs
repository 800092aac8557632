//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (RFC 7539 core with 8
//! rounds) seeded through `SeedableRng::seed_from_u64`, with a fixed stream id
//! per purpose. Bounded integers use rejection sampling on raw 64-bit outputs,
//! so index sampling reproduces bit-for-bit independently of `rand`'s own range
//! sampling algorithms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids, so that independent draws from one seed never overlap.
pub mod stream {
    pub const RANDOM_PRUNE: u64 = 0;
    pub const SYNTH_PLACEMENT: u64 = 1;
    pub const SYNTH_ATTENTION: u64 = 2;
    pub const SYNTH_EMBEDDINGS: u64 = 3;
    pub const BENCH_OPERANDS: u64 = 4;
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `0..bound`. `bound` must be non-zero.
pub fn below<R: RngCore>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0);
    // largest multiple of `bound` representable; values at or above it are rejected
    let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return v % bound;
        }
    }
}

/// `k` distinct indices from `0..n`, uniformly, in draw order (partial
/// Fisher-Yates).
pub fn sample_indices(seed: u64, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n);
    let mut rng = seeded(seed, stream::RANDOM_PRUNE);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(&mut rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}
