use std::hint::black_box;
use std::sync::Mutex;
use std::time::Instant;

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelShape;
use crate::error::{Error, Result};
use crate::rng;

/// Shape timed at desk scale: one layer narrow enough that a 750-token prefill
/// takes well under a second on a single core.
pub const BENCH_SHAPE: ModelShape = ModelShape {
    n_layers: 1,
    model_dim: 512,
    n_heads: 8,
    ffn_dim: 1376,
};

/// Serializes timed sections across threads of one process.
static BENCH_LOCK: Mutex<()> = Mutex::new(());

/// Seeded operands for one transformer layer's prefill matmuls.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefillOperands {
    pub hidden: Array2<f32>,
    pub w_q: Array2<f32>,
    pub w_k: Array2<f32>,
    pub w_v: Array2<f32>,
    pub w_o: Array2<f32>,
    pub w_up: Array2<f32>,
    pub w_down: Array2<f32>,
    n_heads: usize,
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Result<Array2<f32>> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Allocation(format!("{rows}x{cols} overflows")))?;
    let mut buf: Vec<f32> = Vec::new();
    buf.try_reserve_exact(len)
        .map_err(|e| Error::Allocation(format!("{rows}x{cols} f32 matrix: {e}")))?;
    buf.extend((0..len).map(|_| rng.random::<f32>() * 2.0 - 1.0));
    Ok(Array2::from_shape_vec((rows, cols), buf).expect("length matches"))
}

impl PrefillOperands {
    /// Entries are uniform in `[-1, 1)`, drawn in a fixed order from `seed`.
    pub fn generate(n: usize, shape: &ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        if n == 0 {
            return Err(Error::InvalidConfig(
                "benchmark needs at least one token".into(),
            ));
        }
        let d = shape.model_dim as usize;
        let dff = shape.ffn_dim as usize;
        let mut rng = rng::seeded(seed, rng::stream::BENCH_OPERANDS);
        Ok(Self {
            hidden: uniform_matrix(&mut rng, n, d)?,
            w_q: uniform_matrix(&mut rng, d, d)?,
            w_k: uniform_matrix(&mut rng, d, d)?,
            w_v: uniform_matrix(&mut rng, d, d)?,
            w_o: uniform_matrix(&mut rng, d, d)?,
            w_up: uniform_matrix(&mut rng, d, dff)?,
            w_down: uniform_matrix(&mut rng, dff, d)?,
            n_heads: shape.n_heads as usize,
        })
    }

    /// One layer of prefill matmuls; returns a checksum of the output.
    pub fn run_layer(&self) -> f32 {
        let q = self.hidden.dot(&self.w_q);
        let k = self.hidden.dot(&self.w_k);
        let v = self.hidden.dot(&self.w_v);
        let (n, d) = q.dim();
        let head_dim = d / self.n_heads;
        let mut mixed = Array2::<f32>::zeros((n, d));
        for h in 0..self.n_heads {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let scores = q.slice(cols).dot(&k.slice(cols).t());
            mixed.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        }
        let out = mixed.dot(&self.w_o);
        let up = out.dot(&self.w_up);
        let down = up.dot(&self.w_down);
        down.sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub n_tokens: usize,
    pub reps: usize,
    pub mean_ms: f64,
    /// Sample standard deviation.
    pub std_ms: f64,
    pub per_rep_ms: Vec<f64>,
}

/// Times one layer's prefill matmuls at `n` tokens. One warmup run precedes the
/// `reps` timed runs and is not counted. Timed sections of concurrent callers
/// in the same process are serialized.
pub fn bench_prefill(n: usize, shape: &ModelShape, reps: usize, seed: u64) -> Result<BenchStats> {
    if reps < 3 {
        return Err(Error::TooFewReps(reps));
    }
    let operands = PrefillOperands::generate(n, shape, seed)?;
    let _guard = BENCH_LOCK.lock().unwrap_or_else(|e| e.into_inner());

    black_box(operands.run_layer());
    let mut per_rep_ms = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        black_box(black_box(&operands).run_layer());
        per_rep_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }

    let mean_ms = per_rep_ms.iter().sum::<f64>() / reps as f64;
    let var = per_rep_ms
        .iter()
        .map(|t| (t - mean_ms).powi(2))
        .sum::<f64>()
        / (reps - 1) as f64;
    Ok(BenchStats {
        n_tokens: n,
        reps,
        mean_ms,
        std_ms: var.sqrt(),
        per_rep_ms,
    })
}
