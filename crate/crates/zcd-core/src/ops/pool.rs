//! Global average pooling over the spatial axes.

use crate::error::Error;
use crate::tensor::{Shape, Tensor};
use crate::Result;

/// Collapse each `(batch, channel)` plane to its mean: `(B, C, H, W)` to
/// `(B, C, 1, 1)`. Summation runs in row-major order, so results are
/// deterministic for a given input.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let shape = input.shape();
    if shape.plane() == 0 {
        return Err(Error::EmptyOutput {
            op: "global_avg_pool",
            detail: alloc::format!("input plane is {}x{}", shape.height, shape.width),
        });
    }
    let mut out = Tensor::zeros(Shape::new(shape.batch, shape.channels, 1, 1));
    let norm = 1.0 / shape.plane() as f64;
    for b in 0..shape.batch {
        for c in 0..shape.channels {
            let sum: f64 = input.plane(b, c).iter().sum();
            out.set(b, c, 0, 0, sum * norm);
        }
    }
    Ok(out)
}

/// Pooling gradient: broadcast each upstream scalar uniformly over its
/// plane, scaled by `1 / (H * W)`.
pub fn global_avg_pool_backward(input_shape: Shape, upstream: &Tensor) -> Result<Tensor> {
    let expected = Shape::new(input_shape.batch, input_shape.channels, 1, 1);
    if upstream.shape() != expected {
        return Err(Error::ShapeMismatch {
            op: "global_avg_pool_backward",
            left: upstream.shape(),
            right: expected,
        });
    }
    let norm = 1.0 / input_shape.plane() as f64;
    let mut d_input = Tensor::zeros(input_shape);
    for b in 0..input_shape.batch {
        for c in 0..input_shape.channels {
            let g = upstream.get(b, c, 0, 0) * norm;
            d_input.plane_mut(b, c).fill(g);
        }
    }
    Ok(d_input)
}
