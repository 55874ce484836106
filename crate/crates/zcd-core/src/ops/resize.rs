//! Bilinear resize with half-pixel center alignment.
//!
//! Source coordinates follow `src = (dst + 0.5) * (in / out) - 0.5`, clamped
//! to the valid range, for upsampling and downsampling alike (downsampling
//! point-samples; there is no area averaging). Interpolation uses the
//! residual form `a + t * (b - a)` with a clamp to the tap interval, so
//! constant inputs reproduce exactly and outputs never leave the range
//! spanned by their four taps. Resizing to the identical extent returns the
//! input bit for bit.

use alloc::vec::Vec;

use crate::error::Error;
use crate::tensor::{Shape, Tensor};
use crate::Result;

/// Per-output-coordinate sampling data for one axis: the two source indices
/// and the interpolation fraction toward the second one.
struct AxisMap {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

fn axis_map(in_len: usize, out_len: usize) -> AxisMap {
    let scale = in_len as f64 / out_len as f64;
    let mut lo = Vec::with_capacity(out_len);
    let mut hi = Vec::with_capacity(out_len);
    let mut frac = Vec::with_capacity(out_len);
    for d in 0..out_len {
        let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
        let base = libm::floor(src);
        let mut i0 = base as usize;
        let mut t = src - base;
        if i0 + 1 >= in_len {
            // Last source pixel: collapse to a single tap.
            i0 = in_len - 1;
            t = 0.0;
        }
        lo.push(i0);
        hi.push((i0 + 1).min(in_len - 1));
        frac.push(t);
    }
    AxisMap { lo, hi, frac }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // Residual form is exact for a == b; the clamp keeps sub-ulp rounding
    // from escaping the tap interval.
    (a + t * (b - a)).clamp(a.min(b), a.max(b))
}

/// Resize every `(batch, channel)` plane of `input` to `out_h x out_w`.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let in_shape = input.shape();
    if out_h == 0 || out_w == 0 {
        return Err(Error::EmptyOutput {
            op: "bilinear_resize",
            detail: alloc::format!("requested {out_h}x{out_w} output"),
        });
    }
    if in_shape.height == 0 || in_shape.width == 0 {
        return Err(Error::EmptyOutput {
            op: "bilinear_resize",
            detail: alloc::format!("input plane is {}x{}", in_shape.height, in_shape.width),
        });
    }
    if out_h == in_shape.height && out_w == in_shape.width {
        return Ok(input.clone());
    }

    let ymap = axis_map(in_shape.height, out_h);
    let xmap = axis_map(in_shape.width, out_w);
    let out_shape = Shape::new(in_shape.batch, in_shape.channels, out_h, out_w);
    let mut out = Tensor::zeros(out_shape);

    for b in 0..in_shape.batch {
        for c in 0..in_shape.channels {
            let src = input.plane(b, c);
            let dst = out.plane_mut(b, c);
            for oy in 0..out_h {
                let row0 = &src[ymap.lo[oy] * in_shape.width..][..in_shape.width];
                let row1 = &src[ymap.hi[oy] * in_shape.width..][..in_shape.width];
                let ty = ymap.frac[oy];
                let dst_row = &mut dst[oy * out_w..(oy + 1) * out_w];
                for (ox, slot) in dst_row.iter_mut().enumerate() {
                    let (x0, x1, tx) = (xmap.lo[ox], xmap.hi[ox], xmap.frac[ox]);
                    let top = lerp(row0[x0], row0[x1], tx);
                    let bottom = lerp(row1[x0], row1[x1], tx);
                    *slot = lerp(top, bottom, ty);
                }
            }
        }
    }
    Ok(out)
}

/// Scatter the upstream gradient back through the sampling pattern.
///
/// Uses the four bilinear tap weights; the forward clamp only acts at
/// sub-ulp scale and is ignored here.
pub fn bilinear_resize_backward(input_shape: Shape, upstream: &Tensor) -> Result<Tensor> {
    let up_shape = upstream.shape();
    if up_shape.batch != input_shape.batch || up_shape.channels != input_shape.channels {
        return Err(Error::ShapeMismatch {
            op: "bilinear_resize_backward",
            left: up_shape,
            right: input_shape,
        });
    }
    if up_shape.height == input_shape.height && up_shape.width == input_shape.width {
        return Ok(upstream.clone());
    }
    let ymap = axis_map(input_shape.height, up_shape.height);
    let xmap = axis_map(input_shape.width, up_shape.width);
    let mut d_input = Tensor::zeros(input_shape);

    for b in 0..input_shape.batch {
        for c in 0..input_shape.channels {
            let up = upstream.plane(b, c);
            let dst = d_input.plane_mut(b, c);
            for oy in 0..up_shape.height {
                let (y0, y1, ty) = (ymap.lo[oy], ymap.hi[oy], ymap.frac[oy]);
                for ox in 0..up_shape.width {
                    let g = up[oy * up_shape.width + ox];
                    if g == 0.0 {
                        continue;
                    }
                    let (x0, x1, tx) = (xmap.lo[ox], xmap.hi[ox], xmap.frac[ox]);
                    dst[y0 * input_shape.width + x0] += g * (1.0 - ty) * (1.0 - tx);
                    dst[y0 * input_shape.width + x1] += g * (1.0 - ty) * tx;
                    dst[y1 * input_shape.width + x0] += g * ty * (1.0 - tx);
                    dst[y1 * input_shape.width + x1] += g * ty * tx;
                }
            }
        }
    }
    Ok(d_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identity_resize_is_bitwise() {
        let input = Tensor::from_vec(
            Shape::new(1, 1, 2, 2),
            vec![0.1, -1.0 / 3.0, core::f64::consts::E, 4.5],
        )
        .unwrap();
        let out = bilinear_resize(&input, 2, 2).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn constants_stay_constant_at_any_size() {
        let input = Tensor::filled(Shape::new(1, 2, 3, 5), 1.0 / 3.0);
        for (h, w) in [(1, 1), (2, 2), (7, 4), (9, 11)] {
            let out = bilinear_resize(&input, h, w).unwrap();
            assert!(out.data().iter().all(|&v| v == 1.0 / 3.0), "{h}x{w}");
        }
    }

    #[test]
    fn two_to_three_upsample_row() {
        // Row [0, 1] to width 3: centers map to -1/6 (clamped), 1/2, 7/6
        // (clamped), giving [0, 0.5, 1].
        let input = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.0, 1.0]).unwrap();
        let out = bilinear_resize(&input, 1, 3).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn doubling_matches_hand_computation() {
        // 2x2 ramp doubled with half-pixel centers: fractional offsets are
        // 0.25/0.75 in each axis, clamped at the borders.
        let input =
            Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = bilinear_resize(&input, 4, 4).unwrap();
        let expected = [
            0.0, 0.25, 0.75, 1.0, //
            0.5, 0.75, 1.25, 1.5, //
            1.5, 1.75, 2.25, 2.5, //
            2.0, 2.25, 2.75, 3.0,
        ];
        for (got, want) in out.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn downsample_point_samples() {
        // 4 wide to 2 wide: centers map to 0.5 and 2.5, interpolating
        // adjacent pairs rather than averaging windows.
        let input =
            Tensor::from_vec(Shape::new(1, 1, 1, 4), vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        let out = bilinear_resize(&input, 1, 2).unwrap();
        assert_eq!(out.data(), &[5.0, 25.0]);
    }

    #[test]
    fn zero_output_rejected() {
        let input = Tensor::zeros(Shape::new(1, 1, 2, 2));
        assert!(matches!(
            bilinear_resize(&input, 0, 3),
            Err(Error::EmptyOutput { .. })
        ));
        assert!(matches!(
            bilinear_resize(&input, 3, 0),
            Err(Error::EmptyOutput { .. })
        ));
    }

    #[test]
    fn output_range_stays_within_input_range() {
        let mut rng = crate::rng::DetRng::new(5);
        let dist = crate::rng::Distribution::Uniform { lo: -3.0, hi: 3.0 };
        let input = rng.tensor(dist, Shape::new(2, 3, 5, 7)).unwrap();
        for (h, w) in [(3, 3), (10, 14), (5, 7), (1, 1), (13, 2)] {
            let out = bilinear_resize(&input, h, w).unwrap();
            assert!(out.min() >= input.min() && out.max() <= input.max());
        }
    }

    #[test]
    fn backward_shape_and_mass() {
        // Total gradient mass is conserved: every upstream unit lands on
        // taps whose weights sum to one.
        let in_shape = Shape::new(1, 1, 2, 3);
        let upstream = Tensor::filled(Shape::new(1, 1, 5, 4), 1.0);
        let d = bilinear_resize_backward(in_shape, &upstream).unwrap();
        assert_eq!(d.shape(), in_shape);
        let total: f64 = d.data().iter().sum();
        assert!((total - 20.0).abs() < 1e-9, "{total}");
    }
}
