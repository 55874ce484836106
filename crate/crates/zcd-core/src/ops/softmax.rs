//! Softmax competition across fusion branches.

use alloc::vec::Vec;

use crate::error::Error;
use crate::tensor::{Shape, Tensor};
use crate::Result;

/// Normalize N per-channel logit vectors into branch weights.
///
/// `logits` holds N tensors of shape `(B, C, 1, 1)`; the result is
/// `(B, N, C, 1)` where slice `[b, n, c]` is branch n's weight for channel c
/// of batch item b. For every `(b, c)` the weights are positive and sum to
/// one. The largest logit is subtracted before exponentiation, so arbitrary
/// logit magnitudes stay finite.
pub fn softmax_branches(logits: &[&Tensor]) -> Result<Tensor> {
    let n = logits.len();
    if n == 0 {
        return Err(Error::InvalidArgument {
            op: "softmax_branches",
            detail: alloc::string::String::from("no branches supplied"),
        });
    }
    let first = logits[0].shape();
    if first.height != 1 || first.width != 1 {
        return Err(Error::ShapeMismatch {
            op: "softmax_branches",
            left: first,
            right: Shape::new(first.batch, first.channels, 1, 1),
        });
    }
    for t in logits.iter() {
        if t.shape() != first {
            return Err(Error::ShapeMismatch {
                op: "softmax_branches",
                left: t.shape(),
                right: first,
            });
        }
    }
    let (batch, channels) = (first.batch, first.channels);
    let mut out = Tensor::zeros(Shape::new(batch, n, channels, 1));
    for b in 0..batch {
        for c in 0..channels {
            let mut max = f64::NEG_INFINITY;
            for t in logits.iter() {
                max = max.max(t.get(b, c, 0, 0));
            }
            let mut sum = 0.0;
            for (i, t) in logits.iter().enumerate() {
                let e = libm::exp(t.get(b, c, 0, 0) - max);
                out.set(b, i, c, 0, e);
                sum += e;
            }
            for i in 0..n {
                let v = out.get(b, i, c, 0) / sum;
                out.set(b, i, c, 0, v);
            }
        }
    }
    Ok(out)
}

/// Backward pass; returns one gradient tensor per input logit vector.
///
/// With weights `y` and upstream `g`, branch n receives
/// `y_n * (g_n - sum_m g_m * y_m)` per `(b, c)`.
pub fn softmax_branches_backward(weights: &Tensor, upstream: &Tensor) -> Result<Vec<Tensor>> {
    let shape = weights.shape();
    if upstream.shape() != shape {
        return Err(Error::ShapeMismatch {
            op: "softmax_branches_backward",
            left: upstream.shape(),
            right: shape,
        });
    }
    let (batch, n, channels) = (shape.batch, shape.channels, shape.height);
    let mut grads: Vec<Tensor> = (0..n)
        .map(|_| Tensor::zeros(Shape::new(batch, channels, 1, 1)))
        .collect();
    for b in 0..batch {
        for c in 0..channels {
            let mut dot = 0.0;
            for i in 0..n {
                dot += upstream.get(b, i, c, 0) * weights.get(b, i, c, 0);
            }
            for (i, grad) in grads.iter_mut().enumerate() {
                let y = weights.get(b, i, c, 0);
                let g = upstream.get(b, i, c, 0);
                grad.set(b, c, 0, 0, y * (g - dot));
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn logit(values: &[f64]) -> Tensor {
        Tensor::from_vec(Shape::new(1, values.len(), 1, 1), values.to_vec()).unwrap()
    }

    #[test]
    fn equal_logits_give_uniform_weights() {
        let a = logit(&[0.0, 0.0]);
        let tensors = [&a, &a, &a, &a];
        let w = softmax_branches(&tensors).unwrap();
        assert_eq!(w.shape(), Shape::new(1, 4, 2, 1));
        for v in w.data() {
            assert_eq!(*v, 0.25);
        }
    }

    #[test]
    fn weights_sum_to_one_per_channel() {
        let a = logit(&[1.0, -2.0]);
        let b = logit(&[0.5, 3.0]);
        let c = logit(&[-1.0, 0.0]);
        let w = softmax_branches(&[&a, &b, &c]).unwrap();
        for ch in 0..2 {
            let sum: f64 = (0..3).map(|n| w.get(0, n, ch, 0)).sum();
            assert!((sum - 1.0).abs() < 1e-15, "{sum}");
            for n in 0..3 {
                assert!(w.get(0, n, ch, 0) > 0.0);
            }
        }
    }

    #[test]
    fn extreme_logits_stay_finite_and_saturate() {
        let a = logit(&[1000.0]);
        let b = logit(&[0.0]);
        let w = softmax_branches(&[&a, &b]).unwrap();
        assert!(w.all_finite());
        assert!((w.get(0, 0, 0, 0) - 1.0).abs() < 1e-12);
        assert!(w.get(0, 1, 0, 0) < 1e-12);
    }

    #[test]
    fn mismatched_branches_rejected() {
        let a = logit(&[0.0, 0.0]);
        let b = Tensor::zeros(Shape::new(1, 3, 1, 1));
        assert!(matches!(
            softmax_branches(&[&a, &b]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(softmax_branches(&[]).is_err());
    }

    #[test]
    fn backward_rows_sum_to_zero() {
        // Softmax output is shift-invariant, so gradient components along
        // the all-ones direction must cancel.
        let a = logit(&[0.3]);
        let b = logit(&[-1.2]);
        let c = logit(&[0.9]);
        let w = softmax_branches(&[&a, &b, &c]).unwrap();
        let up = Tensor::from_vec(Shape::new(1, 3, 1, 1), vec![1.0, -2.0, 0.5]).unwrap();
        let grads = softmax_branches_backward(&w, &up).unwrap();
        let total: f64 = grads.iter().map(|g| g.get(0, 0, 0, 0)).sum();
        assert!(total.abs() < 1e-15, "{total}");
    }
}
