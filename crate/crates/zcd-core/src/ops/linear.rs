//! Fully connected layers over pooled `(B, C, 1, 1)` descriptors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::tensor::{Shape, Tensor};
use crate::Result;

/// Weights of one fully connected layer.
///
/// The weight tensor is laid out `(out_dim, in_dim, 1, 1)`; flattened it is
/// the row-major `out_dim x in_dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl LinearParams {
    pub fn new(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        let shape = weight.shape();
        if shape.height != 1 || shape.width != 1 {
            return Err(Error::ShapeMismatch {
                op: "linear::weight",
                left: shape,
                right: Shape::new(shape.batch, shape.channels, 1, 1),
            });
        }
        if bias.len() != shape.batch {
            return Err(Error::LengthMismatch {
                op: "linear::bias",
                expected: shape.batch,
                got: bias.len(),
            });
        }
        Ok(LinearParams { weight, bias })
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape().batch
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape().channels
    }

    /// Trainable scalars: `out_dim * in_dim + out_dim`.
    pub fn param_count(&self) -> usize {
        self.weight.shape().len() + self.bias.len()
    }

    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        linear(input, &self.weight, &self.bias)
    }
}

/// `y = W x + b` per batch item; `input` must be `(B, in_dim, 1, 1)`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let in_shape = input.shape();
    let w_shape = weight.shape();
    if in_shape.height != 1 || in_shape.width != 1 || in_shape.channels != w_shape.channels {
        return Err(Error::ShapeMismatch {
            op: "linear",
            left: in_shape,
            right: w_shape,
        });
    }
    if bias.len() != w_shape.batch {
        return Err(Error::LengthMismatch {
            op: "linear::bias",
            expected: w_shape.batch,
            got: bias.len(),
        });
    }
    let (out_dim, in_dim) = (w_shape.batch, w_shape.channels);
    let mut out = Tensor::zeros(Shape::new(in_shape.batch, out_dim, 1, 1));
    for b in 0..in_shape.batch {
        let x = &input.data()[b * in_dim..(b + 1) * in_dim];
        let y = &mut out.data_mut()[b * out_dim..(b + 1) * out_dim];
        for (o, slot) in y.iter_mut().enumerate() {
            let row = &weight.data()[o * in_dim..(o + 1) * in_dim];
            let mut acc = bias[o];
            for (&w, &v) in row.iter().zip(x) {
                acc += w * v;
            }
            *slot = acc;
        }
    }
    Ok(out)
}

/// Gradients of [`linear`].
#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

pub fn linear_backward(input: &Tensor, weight: &Tensor, upstream: &Tensor) -> Result<LinearGrads> {
    let in_shape = input.shape();
    let w_shape = weight.shape();
    let expected = Shape::new(in_shape.batch, w_shape.batch, 1, 1);
    if upstream.shape() != expected {
        return Err(Error::ShapeMismatch {
            op: "linear_backward",
            left: upstream.shape(),
            right: expected,
        });
    }
    let (out_dim, in_dim) = (w_shape.batch, w_shape.channels);
    let mut d_input = Tensor::zeros(in_shape);
    let mut d_weight = Tensor::zeros(w_shape);
    let mut d_bias = vec![0.0; out_dim];
    for b in 0..in_shape.batch {
        let x = &input.data()[b * in_dim..(b + 1) * in_dim];
        let g = &upstream.data()[b * out_dim..(b + 1) * out_dim];
        let dx = &mut d_input.data_mut()[b * in_dim..(b + 1) * in_dim];
        for (o, &go) in g.iter().enumerate() {
            d_bias[o] += go;
            let w_row = &weight.data()[o * in_dim..(o + 1) * in_dim];
            let dw_row = &mut d_weight.data_mut()[o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                dw_row[i] += go * x[i];
                dx[i] += go * w_row[i];
            }
        }
    }
    Ok(LinearGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    })
}
