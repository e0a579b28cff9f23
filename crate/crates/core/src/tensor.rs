//! Dense double-precision tensors.
//!
//! A [`Tensor`] is a row-major `Vec<f64>` plus a shape. Rank-1 tensors are
//! used for biases and score vectors; rank-2 for everything sequence-shaped.
//! All committed values must be finite.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected shape {expected}, got {got:?}")]
    BadShape {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("{op}: non-finite value at index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("{op}: index {index} out of range for size {size}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidDropoutRate(f64),
    #[error("backward seed must be a scalar, got shape {0:?}")]
    SeedNotScalar(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataShapeMismatch { len: usize, shape: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::DataShapeMismatch {
                len: data.len(),
                shape,
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                op: "tensor::from_vec",
                index,
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Elementwise uniform init in `[lo, hi)`.
    pub fn uniform<R: Rng>(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.random_range(lo..hi)).collect();
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows and columns, treating rank-1 `[k]` as a single row `(1, k)`.
    pub fn dims2(&self) -> (usize, usize) {
        dims2_of(&self.shape)
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn accumulate_grad(&mut self, incoming: &[f64]) {
        debug_assert_eq!(incoming.len(), self.data.len());
        match self.grad.as_mut() {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(incoming) {
                    *a += b;
                }
            }
            None => self.grad = Some(incoming.to_vec()),
        }
    }
}

pub(crate) fn dims2_of(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("rank-{} tensor where rank 1 or 2 expected", shape.len()),
    }
}

/// Numerically stable softmax: subtracts the max before exponentiating.
pub fn softmax_stable(scores: &[f64]) -> Result<Vec<f64>, TensorError> {
    if scores.is_empty() {
        return Err(TensorError::EmptyInput { op: "softmax" });
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
