//! Dense tensors and the masked layer primitives used for training.
//!
//! All kernels are single-threaded pure functions over row-major `f64`
//! buffers. Masks are dense `{0,1}` tensors with the same shape as the
//! weights they gate; pruned coordinates contribute nothing to outputs and
//! receive exactly zero weight gradient.

mod activation;
mod conv;
mod dense;
mod optim;
mod pool;

pub use activation::{relu_backward, relu_forward, softmax_cross_entropy};
pub use conv::{conv2d_backward, conv2d_forward};
pub use dense::{fc_backward, fc_forward};
pub use optim::sgd_step;
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolIndices};

pub(crate) use activation::softmax_cross_entropy_with_denominator;
pub(crate) use conv::conv2d_backward_opt;
pub(crate) use dense::fc_backward_opt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument {
                op: "Tensor::new",
                msg: format!("zero-sized dimension in shape {shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape("Tensor::new", "data length", numel, data.len()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape("Tensor::reshape", "element count", self.data.len(), numel));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Elementwise product with a `{0,1}` mask.
    pub fn masked(&self, mask: &Tensor) -> Result<Tensor> {
        check_same_shape("Tensor::masked", "mask", self, mask)?;
        let data = self
            .data
            .iter()
            .zip(&mask.data)
            .map(|(&v, &m)| v * m)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn apply_mask(&mut self, mask: &Tensor) -> Result<()> {
        check_same_shape("Tensor::apply_mask", "mask", self, mask)?;
        for (v, &m) in self.data.iter_mut().zip(&mask.data) {
            if m == 0.0 {
                *v = 0.0;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        check_same_shape("Tensor::add_assign", "operand", self, other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }
}

pub(crate) fn check_same_shape(op: &'static str, what: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape.len() != b.shape.len() {
        return Err(Error::shape(op, format!("{what} rank"), a.shape.len(), b.shape.len()));
    }
    for (axis, (&x, &y)) in a.shape.iter().zip(&b.shape).enumerate() {
        if x != y {
            return Err(Error::shape(op, format!("{what} axis {axis}"), x, y));
        }
    }
    Ok(())
}

pub(crate) fn check_rank(op: &'static str, what: &str, t: &Tensor, rank: usize) -> Result<()> {
    if t.ndim() != rank {
        return Err(Error::shape(op, format!("{what} rank"), rank, t.ndim()));
    }
    Ok(())
}

/// Gradients produced by a parametric layer's backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight_grad: Tensor,
    pub bias_grad: Tensor,
    pub input_grad: Tensor,
}
