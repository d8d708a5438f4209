//! Dense float64 tensors and a reverse-mode differentiation tape.
//!
//! The tape ([`Graph`]) covers exactly the operations the training objective
//! needs: dense and 3x3 convolutional layers, ReLU, 2x2 max-pooling,
//! inverted dropout, softmax cross-entropy, and the scalar plumbing that
//! assembles a loss. Tensors detached from any graph are plain values and
//! safe to share across threads; a graph is single-owner and single-threaded.

mod graph;

pub use graph::{Graph, NodeId};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Forward-pass mode. `Train` and `EvalMc` both sample dropout masks
/// (MC dropout keeps dropout active at inference); `Off` disables it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    Train,
    EvalMc,
    Off,
}

/// Dense row-major float64 array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dim(format!(
                "shape {:?} expects {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    /// Standard-normal entries scaled by `std`.
    pub fn randn(shape: Vec<usize>, std: f64, rng: &mut RngStream) -> Self {
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.normal() * std).collect();
        Tensor { shape, data }
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::Usage(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite value in {context}")))
        }
    }

    /// Concatenate along the leading axis. Trailing dims must match.
    pub fn concat_rows(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.is_empty() || other.shape.is_empty() || self.shape[1..] != other.shape[1..] {
            return Err(Error::Dim(format!(
                "concat_rows: incompatible shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let mut shape = self.shape.clone();
        shape[0] += other.shape[0];
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor { shape, data })
    }
}

/// Relative error with a floor guarding near-zero denominators; used by the
/// finite-difference oracles throughout the test suites.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
