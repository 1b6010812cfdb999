//! Minimal reverse-mode differentiable tensor engine.
//!
//! Everything the segmentation network needs and nothing more: dense 2-D
//! tensors, a build-once tape with backward closures per op, an LSTM
//! cell, multi-head attention, BCE loss, Adam, and finite-difference
//! gradient checking. Generic over the scalar type: f32 is the training
//! default, f64 is used wherever finite differences need the headroom.
//!
//! No GPU, no graph optimization, no broadcasting beyond rows.

mod adam;
mod gradcheck;
mod layers;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_STEP};
pub use layers::{
    attention_weights, bilstm_layer, encoder_layer, lstm_cell, multihead_attention,
    positional_encoding, EncoderLayerTids, LstmTids,
};
pub use params::{load_checkpoint, save_checkpoint, ParamSet};
pub use tape::{Tape, Tid};

use num_traits::Float;
use thiserror::Error;

/// Scalar type the engine is generic over: f32 or f64.
pub trait Scalar:
    Float + num_traits::NumAssign + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGrad { param: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Dense row-major 2-D tensor. Scalars are 1x1, row vectors 1xN.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Tensor<T> {
        Tensor {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Tensor<T> {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: T) -> Tensor<T> {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<T>) -> Tensor<T> {
        assert_eq!(
            rows * cols,
            data.len(),
            "shape ({rows}, {cols}) does not match {} values",
            data.len()
        );
        Tensor { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Tensor<T> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Tensor<T> {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The single value of a 1x1 tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterpret the flat data with a new shape of equal size.
    pub fn reshaped(&self, rows: usize, cols: usize) -> Tensor<T> {
        assert_eq!(rows * cols, self.data.len(), "reshape size mismatch");
        Tensor {
            rows,
            cols,
            data: self.data.clone(),
        }
    }

    /// Glorot-uniform initialization.
    pub fn xavier_uniform<R: rand::Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
            .collect();
        Tensor { rows, cols, data }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shape_invariant() {
        let t = Tensor::<f32>::zeros(3, 4);
        assert_eq!(t.shape(), (3, 4));
        assert_eq!(t.len(), 12);
        assert!(t.is_finite());
    }

    #[test]
    #[should_panic(expected = "does not match")]
    fn from_flat_rejects_bad_size() {
        let _ = Tensor::<f32>::from_flat(2, 3, vec![0.0; 5]);
    }

    #[test]
    fn cast_round_trip() {
        let t = Tensor::<f32>::from_flat(1, 3, vec![0.5, -1.25, 3.0]);
        let d: Tensor<f64> = t.cast();
        let back: Tensor<f32> = d.cast();
        assert_eq!(back, t);
    }
}
