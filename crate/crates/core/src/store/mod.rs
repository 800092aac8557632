//! Tensor and result artifacts: in-memory types shared by every module and
//! their on-disk formats (npy v1.0 for tensors, JSON for prune results).

pub mod npy;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3, ArrayD, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruning::{KeptOrder, PruneResult, Strategy};
pub use npy::Dtype;

/// Maximum deviation of an attention row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

fn first_non_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<usize> {
    values.into_iter().position(|v| !v.is_finite())
}

/// A dense real tensor of any rank, tagged with the element type it was read
/// from (or should be written as). Values are held as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    data: ArrayD<f64>,
    dtype: Dtype,
}

impl Tensor {
    pub fn new(data: ArrayD<f64>, dtype: Dtype) -> Result<Self> {
        if let Some(index) = first_non_finite(data.iter()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { data, dtype })
    }

    pub fn from_f32(shape: &[usize], values: &[f32]) -> Result<Self> {
        let data = ArrayD::from_shape_vec(IxDyn(shape), values.iter().map(|&v| v as f64).collect())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(data, Dtype::F32)
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn rank(&self) -> usize {
        self.data.ndim()
    }

    pub fn data(&self) -> &ArrayD<f64> {
        &self.data
    }

    pub fn into_data(self) -> ArrayD<f64> {
        self.data
    }

    fn expect_rank(&self, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::WrongRank {
                expected: rank,
                found: self.rank(),
            });
        }
        Ok(())
    }

    pub fn into_array2(self) -> Result<Array2<f64>> {
        self.expect_rank(2)?;
        Ok(self.data.into_dimensionality().expect("rank checked"))
    }

    pub fn into_array3(self) -> Result<Array3<f64>> {
        self.expect_rank(3)?;
        Ok(self.data.into_dimensionality().expect("rank checked"))
    }
}

impl From<&EmbeddingSequence> for Tensor {
    fn from(seq: &EmbeddingSequence) -> Self {
        Tensor {
            data: seq.data.clone().into_dyn(),
            dtype: Dtype::F32,
        }
    }
}

/// Loads an npy file and checks that its rank equals `expected_rank`.
pub fn load_tensor(path: impl AsRef<Path>, expected_rank: usize) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let (header, values) = npy::read_npy(&mut BufReader::new(file))?;
    if header.shape.len() != expected_rank {
        return Err(Error::WrongRank {
            expected: expected_rank,
            found: header.shape.len(),
        });
    }
    let data = ArrayD::from_shape_vec(IxDyn(&header.shape), values)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    Ok(Tensor {
        data,
        dtype: header.dtype,
    })
}

/// Writes `tensor` as npy v1.0 using its dtype.
pub fn save_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = npy::Header {
        dtype: tensor.dtype,
        shape: tensor.shape().to_vec(),
    };
    let values: Vec<f64> = tensor.data.iter().copied().collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    npy::write_npy(&mut writer, &header, &values).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Token embeddings, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    data: Array2<f64>,
}

impl EmbeddingSequence {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "embedding sequence must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(index) = first_non_finite(data.iter()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { data })
    }

    pub fn n_tokens(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

impl TryFrom<Tensor> for EmbeddingSequence {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        Self::new(t.into_array2()?)
    }
}

/// Per-head queries and keys, each `H x N x Dh`.
#[derive(Debug, Clone, PartialEq)]
pub struct QkTensor {
    queries: Array3<f64>,
    keys: Array3<f64>,
}

impl QkTensor {
    pub fn new(queries: Array3<f64>, keys: Array3<f64>) -> Result<Self> {
        if queries.shape() != keys.shape() {
            return Err(Error::ShapeMismatch(format!(
                "queries {:?} vs keys {:?}",
                queries.shape(),
                keys.shape()
            )));
        }
        if queries.shape().contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "queries/keys must be non-empty, got {:?}",
                queries.shape()
            )));
        }
        if let Some(index) = first_non_finite(queries.iter()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(index) = first_non_finite(keys.iter()) {
            return Err(Error::NonFinite {
                index: queries.len() + index,
            });
        }
        Ok(Self { queries, keys })
    }

    /// Splits a stacked `2 x H x N x Dh` tensor (queries first).
    pub fn from_stacked(t: Tensor) -> Result<Self> {
        t.expect_rank(4)?;
        if t.shape()[0] != 2 {
            return Err(Error::ShapeMismatch(format!(
                "stacked q/k tensor needs leading dimension 2, got {:?}",
                t.shape()
            )));
        }
        let data = t.into_data();
        let q = data.index_axis(Axis(0), 0).to_owned();
        let k = data.index_axis(Axis(0), 1).to_owned();
        Self::new(
            q.into_dimensionality().expect("rank 3"),
            k.into_dimensionality().expect("rank 3"),
        )
    }

    pub fn to_stacked(&self, dtype: Dtype) -> Tensor {
        let stacked = ndarray::stack(Axis(0), &[self.queries.view(), self.keys.view()])
            .expect("equal shapes");
        Tensor {
            data: stacked.into_dyn(),
            dtype,
        }
    }

    pub fn n_heads(&self) -> usize {
        self.queries.shape()[0]
    }

    pub fn n_tokens(&self) -> usize {
        self.queries.shape()[1]
    }

    pub fn head_dim(&self) -> usize {
        self.queries.shape()[2]
    }

    pub fn queries(&self) -> &Array3<f64> {
        &self.queries
    }

    pub fn keys(&self) -> &Array3<f64> {
        &self.keys
    }
}

/// Post-softmax attention weights, `H x N x N`, every query row stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    weights: Array3<f64>,
}

impl AttentionTensor {
    /// Validates shape, range and row sums.
    pub fn new(weights: Array3<f64>) -> Result<Self> {
        let (h, n, m) = weights.dim();
        if h == 0 || n == 0 || n != m {
            return Err(Error::InvalidAttention(format!(
                "expected H x N x N with H, N >= 1, got {:?}",
                weights.shape()
            )));
        }
        if let Some(index) = first_non_finite(weights.iter()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(v) = weights.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidAttention(format!(
                "weight {v} outside [0, 1]"
            )));
        }
        for (head, plane) in weights.outer_iter().enumerate() {
            for (row, weights_row) in plane.outer_iter().enumerate() {
                let sum: f64 = weights_row.sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidAttention(format!(
                        "head {head} row {row} sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    pub(crate) fn new_unchecked(weights: Array3<f64>) -> Self {
        Self { weights }
    }

    pub fn n_heads(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn n_tokens(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Array3<f64> {
        &self.weights
    }

    pub fn into_weights(self) -> Array3<f64> {
        self.weights
    }
}

impl TryFrom<Tensor> for AttentionTensor {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        Self::new(t.into_array3()?)
    }
}

/// On-disk form of a [`PruneResult`]. Contextual embeddings are not stored
/// here; they live in the pruned embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneRecord {
    pub strategy: Strategy,
    pub n_tokens_in: usize,
    pub k_requested: usize,
    pub k_kept: usize,
    pub segments: Option<usize>,
    pub ordering: KeptOrder,
    pub kept_indices: Vec<usize>,
    pub contextual_count: usize,
}

impl From<&PruneResult> for PruneRecord {
    fn from(r: &PruneResult) -> Self {
        PruneRecord {
            strategy: r.strategy,
            n_tokens_in: r.n_tokens_in,
            k_requested: r.k_requested,
            k_kept: r.k_kept(),
            segments: r.segments,
            ordering: r.ordering,
            kept_indices: r.kept_indices.clone(),
            contextual_count: r.contextual_count(),
        }
    }
}

impl PruneRecord {
    /// Rebuilds a result without contextual embeddings. The contextual count
    /// is retained.
    pub fn into_result(self) -> Result<PruneResult> {
        if self.k_kept != self.kept_indices.len() + self.contextual_count {
            return Err(Error::InvalidConfig(format!(
                "k_kept {} != {} kept + {} contextual",
                self.k_kept,
                self.kept_indices.len(),
                self.contextual_count
            )));
        }
        let result = PruneResult {
            strategy: self.strategy,
            n_tokens_in: self.n_tokens_in,
            k_requested: self.k_requested,
            segments: self.segments,
            ordering: self.ordering,
            kept_indices: self.kept_indices,
            contextual_tokens: None,
            declared_contextual: self.contextual_count,
        };
        result.validate_indices()?;
        Ok(result)
    }
}

/// Serializes a result as pretty JSON with a trailing newline.
pub fn prune_result_json(result: &PruneResult) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&PruneRecord::from(result))?;
    s.push('\n');
    Ok(s)
}

pub fn save_prune_result(result: &PruneResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    result.validate_indices()?;
    let json = prune_result_json(result)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_prune_result(path: impl AsRef<Path>) -> Result<PruneResult> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let record: PruneRecord = serde_json::from_str(&text)?;
    record.into_result()
}
