//! Weighted fusion of resized pyramid branches.

use alloc::vec::Vec;

use crate::error::Error;
use crate::tensor::{Shape, Tensor};
use crate::Result;

fn check_fuse_shapes(branches: &[&Tensor], weights: &Tensor) -> Result<(Shape, usize)> {
    let n = branches.len();
    if n == 0 {
        return Err(Error::InvalidArgument {
            op: "fuse",
            detail: alloc::string::String::from("no branches supplied"),
        });
    }
    let shape = branches[0].shape();
    for t in branches.iter() {
        if t.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "fuse",
                left: t.shape(),
                right: shape,
            });
        }
    }
    let w_shape = weights.shape();
    let expected = Shape::new(shape.batch, n, shape.channels, 1);
    if w_shape != expected {
        return Err(Error::ShapeMismatch {
            op: "fuse",
            left: w_shape,
            right: expected,
        });
    }
    Ok((shape, n))
}

/// Blend N equal-shape branches with per-channel weights `(B, N, C, 1)`.
///
/// Computed in the residual form `b_0 + sum_{n>=1} w_n * (b_n - b_0)`,
/// which equals `sum_n w_n * b_n` whenever the weights sum to one (as
/// softmax weights do) but reproduces the common value bit for bit when all
/// branches are identical — floating-point weight sums are only one-ish,
/// and the plain form would smear that error over the output.
pub fn fuse(branches: &[&Tensor], weights: &Tensor) -> Result<Tensor> {
    let (shape, n) = check_fuse_shapes(branches, weights)?;
    let mut out = branches[0].clone();
    for b in 0..shape.batch {
        for c in 0..shape.channels {
            let base_start = shape.index(b, c, 0, 0);
            for i in 1..n {
                let w = weights.get(b, i, c, 0);
                let branch = branches[i].plane(b, c);
                let base = branches[0].plane(b, c);
                let dst = &mut out.data_mut()[base_start..base_start + shape.plane()];
                for ((o, &v), &v0) in dst.iter_mut().zip(branch).zip(base) {
                    *o += w * (v - v0);
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`fuse`].
#[derive(Debug, Clone)]
pub struct FuseGrads {
    pub branches: Vec<Tensor>,
    pub weights: Tensor,
}

/// Backward of the residual form: branch 0 receives `1 - sum_{n>=1} w_n`
/// of the upstream per channel, branch n receives `w_n`, and weight n
/// receives the inner product of the upstream with `b_n - b_0`. Weight 0
/// does not appear in the forward expression, so its gradient is zero;
/// when the weights come from a softmax the logit gradients are identical
/// to the plain weighted-sum formulation.
pub fn fuse_backward(
    branches: &[&Tensor],
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<FuseGrads> {
    let (shape, n) = check_fuse_shapes(branches, weights)?;
    if upstream.shape() != shape {
        return Err(Error::ShapeMismatch {
            op: "fuse_backward",
            left: upstream.shape(),
            right: shape,
        });
    }
    let mut d_branches: Vec<Tensor> = (0..n).map(|_| Tensor::zeros(shape)).collect();
    let mut d_weights = Tensor::zeros(weights.shape());
    for b in 0..shape.batch {
        for c in 0..shape.channels {
            let up = upstream.plane(b, c);
            let base = branches[0].plane(b, c);
            let mut w_rest = 0.0;
            for i in 1..n {
                let w = weights.get(b, i, c, 0);
                w_rest += w;
                let branch = branches[i].plane(b, c);
                let mut dw = 0.0;
                {
                    let dst = d_branches[i].plane_mut(b, c);
                    for (((d, &g), &v), &v0) in
                        dst.iter_mut().zip(up).zip(branch).zip(base)
                    {
                        *d += w * g;
                        dw += g * (v - v0);
                    }
                }
                d_weights.set(b, i, c, 0, dw);
            }
            let dst0 = d_branches[0].plane_mut(b, c);
            let keep = 1.0 - w_rest;
            for (d, &g) in dst0.iter_mut().zip(up) {
                *d += keep * g;
            }
        }
    }
    Ok(FuseGrads {
        branches: d_branches,
        weights: d_weights,
    })
}
