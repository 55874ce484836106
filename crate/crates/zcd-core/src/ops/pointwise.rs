//! Elementwise operations: ReLU, addition, per-channel affine, scalar gain.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::tensor::Tensor;
use crate::Result;

/// `max(x, 0)` elementwise.
pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// ReLU gradient: passes where the forward input was strictly positive.
/// The subgradient at exactly zero is taken as zero.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if input.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch {
            op: "relu_backward",
            left: input.shape(),
            right: upstream.shape(),
        });
    }
    let mut out = upstream.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Elementwise sum of two equal-shape tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "elementwise_add",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    Ok(out)
}

/// Addition routes the upstream gradient to both operands unchanged.
pub fn add_backward(upstream: &Tensor) -> (Tensor, Tensor) {
    (upstream.clone(), upstream.clone())
}

/// Per-channel affine map `y[b,c,:,:] = gamma[c] * x[b,c,:,:] + beta[c]`,
/// the trainable part of a channel normalization layer.
pub fn channel_affine(input: &Tensor, gamma: &[f64], beta: &[f64]) -> Result<Tensor> {
    let shape = input.shape();
    if gamma.len() != shape.channels || beta.len() != shape.channels {
        return Err(Error::LengthMismatch {
            op: "channel_affine",
            expected: shape.channels,
            got: if gamma.len() != shape.channels {
                gamma.len()
            } else {
                beta.len()
            },
        });
    }
    let mut out = input.clone();
    for b in 0..shape.batch {
        for c in 0..shape.channels {
            let (g, s) = (gamma[c], beta[c]);
            for v in out.plane_mut(b, c) {
                *v = g * *v + s;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`channel_affine`].
#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn channel_affine_backward(
    input: &Tensor,
    gamma: &[f64],
    upstream: &Tensor,
) -> Result<AffineGrads> {
    let shape = input.shape();
    if upstream.shape() != shape {
        return Err(Error::ShapeMismatch {
            op: "channel_affine_backward",
            left: upstream.shape(),
            right: shape,
        });
    }
    if gamma.len() != shape.channels {
        return Err(Error::LengthMismatch {
            op: "channel_affine_backward",
            expected: shape.channels,
            got: gamma.len(),
        });
    }
    let mut d_input = Tensor::zeros(shape);
    let mut d_gamma = vec![0.0; shape.channels];
    let mut d_beta = vec![0.0; shape.channels];
    for b in 0..shape.batch {
        for c in 0..shape.channels {
            let up = upstream.plane(b, c);
            let src = input.plane(b, c);
            let dst = d_input.plane_mut(b, c);
            let mut dg = 0.0;
            let mut db = 0.0;
            for ((d, &g), &x) in dst.iter_mut().zip(up).zip(src) {
                *d = gamma[c] * g;
                dg += g * x;
                db += g;
            }
            d_gamma[c] += dg;
            d_beta[c] += db;
        }
    }
    Ok(AffineGrads {
        input: d_input,
        gamma: d_gamma,
        beta: d_beta,
    })
}

/// Multiply a whole tensor by one trainable scalar.
pub fn scale_mul(input: &Tensor, factor: f64) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v *= factor;
    }
    out
}

/// Gradients of [`scale_mul`]: the input picks up the factor, the factor
/// picks up the inner product of upstream and input.
#[derive(Debug, Clone)]
pub struct ScaleGrads {
    pub input: Tensor,
    pub factor: f64,
}

pub fn scale_mul_backward(input: &Tensor, factor: f64, upstream: &Tensor) -> Result<ScaleGrads> {
    if upstream.shape() != input.shape() {
        return Err(Error::ShapeMismatch {
            op: "scale_mul_backward",
            left: upstream.shape(),
            right: input.shape(),
        });
    }
    let d_input = scale_mul(upstream, factor);
    let d_factor = upstream
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| g * x)
        .sum();
    Ok(ScaleGrads {
        input: d_input,
        factor: d_factor,
    })
}
