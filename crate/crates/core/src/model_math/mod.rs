//! Framework-free reference numerics for the extraction model's fusion,
//! token compression and training losses.
//!
//! Everything here runs on plain `f64` buffers and is sized for small
//! tensors: unit checks, golden values and gradient verification.

mod loss;
mod msam;
mod tcp;
pub mod verify;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loss::{
    bce_grad, bce_loss, ce_text_grad, ce_text_loss, dice_grad, dice_loss, grad_check, total_loss, DICE_SMOOTH,
    GRAD_CHECK_STEP, PROB_EPS,
};
pub use msam::{bilinear_resize, msam_forward, Conv2d, MsamParams, MSAM_CHANNELS, PYRAMID_STRIDES};
pub use tcp::{segment_sizes, tcp_forward, TcpParams, DEFAULT_TCP_TOKENS};

/// A dense row-major tensor: `(channels, height, width)` feature maps or
/// `(tokens, dim)` token matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("tensor holds non-finite values".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
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

    /// `(c, h, w)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Shape(format!("expected (C, H, W), got {:?}", self.shape))),
        }
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn matrix_dims(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("expected (N, D), got {:?}", self.shape))),
        }
    }

    pub fn at3(&self, c: usize, i: usize, j: usize) -> f64 {
        let (_, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(c * h + i) * w + j]
    }
}
