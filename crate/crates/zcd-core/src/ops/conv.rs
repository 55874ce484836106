//! 2-D convolution with zero padding and integer stride.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::tensor::{Shape, Tensor};
use crate::Result;

/// Weights of one convolution layer.
///
/// The kernel tensor is laid out `(out_channels, in_channels, k_h, k_w)`,
/// reusing the rank-4 tensor type with the batch axis as the output-channel
/// axis. Flattened row-major this is exactly the `out_channels x K` matrix
/// the forward pass multiplies against unfolded input patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernel: Tensor,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(kernel: Tensor, bias: Vec<f64>, stride: usize, padding: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument {
                op: "conv2d",
                detail: alloc::string::String::from("stride must be at least 1"),
            });
        }
        if bias.len() != kernel.shape().batch {
            return Err(Error::LengthMismatch {
                op: "conv2d::bias",
                expected: kernel.shape().batch,
                got: bias.len(),
            });
        }
        Ok(ConvParams {
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape().batch
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape().channels
    }

    pub fn kernel_hw(&self) -> (usize, usize) {
        (self.kernel.shape().height, self.kernel.shape().width)
    }

    /// Trainable scalars in this layer: `k_h * k_w * in_c * out_c + out_c`.
    pub fn param_count(&self) -> usize {
        self.kernel.shape().len() + self.bias.len()
    }

    /// Output extent for an input of `h x w` pixels:
    /// `floor((in + 2 * padding - k) / stride) + 1`, which must be >= 1.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel_hw();
        output_extent(h, kh, self.stride, self.padding)
            .and_then(|oh| Ok((oh, output_extent(w, kw, self.stride, self.padding)?)))
    }

    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        conv2d(
            input,
            &self.kernel,
            &self.bias,
            self.stride,
            self.padding,
        )
    }
}

fn output_extent(input: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < k {
        return Err(Error::EmptyOutput {
            op: "conv2d",
            detail: alloc::format!(
                "kernel extent {k} exceeds padded input extent {padded}"
            ),
        });
    }
    Ok((padded - k) / stride + 1)
}

/// Convolve `input` `(B, C_in, H, W)` with `kernel` `(C_out, C_in, kH, kW)`.
///
/// Implemented by unfolding each batch item into a `K x (oH * oW)` patch
/// matrix (`K = C_in * kH * kW`) and accumulating kernel rows against it, so
/// the inner loops stay dense and branch-free.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let in_shape = input.shape();
    let k_shape = kernel.shape();
    if in_shape.channels != k_shape.channels {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: in_shape,
            right: k_shape,
        });
    }
    if bias.len() != k_shape.batch {
        return Err(Error::LengthMismatch {
            op: "conv2d::bias",
            expected: k_shape.batch,
            got: bias.len(),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidArgument {
            op: "conv2d",
            detail: alloc::string::String::from("stride must be at least 1"),
        });
    }
    let oh = output_extent(in_shape.height, k_shape.height, stride, padding)?;
    let ow = output_extent(in_shape.width, k_shape.width, stride, padding)?;

    let out_shape = Shape::new(in_shape.batch, k_shape.batch, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let k_len = k_shape.channels * k_shape.height * k_shape.width;
    let s_out = oh * ow;
    let mut col = vec![0.0; k_len * s_out];

    for b in 0..in_shape.batch {
        unfold(input, b, k_shape, stride, padding, oh, ow, &mut col);
        let kern = kernel.data();
        for oc in 0..k_shape.batch {
            let out_plane = out.plane_mut(b, oc);
            out_plane.fill(bias[oc]);
            let k_row = &kern[oc * k_len..(oc + 1) * k_len];
            for (r, &kv) in k_row.iter().enumerate() {
                let col_row = &col[r * s_out..(r + 1) * s_out];
                for (o, &c) in out_plane.iter_mut().zip(col_row) {
                    *o += kv * c;
                }
            }
        }
    }
    Ok(out)
}

/// Write the unfolded patch matrix for batch item `b` into `col`
/// (`K` rows of `oh * ow` samples; out-of-bounds taps read as zero).
#[allow(clippy::too_many_arguments)]
fn unfold(
    input: &Tensor,
    b: usize,
    k_shape: Shape,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    col: &mut [f64],
) {
    let in_shape = input.shape();
    let s_out = oh * ow;
    let mut r = 0;
    for ic in 0..k_shape.channels {
        let plane = input.plane(b, ic);
        for ky in 0..k_shape.height {
            for kx in 0..k_shape.width {
                let row = &mut col[r * s_out..(r + 1) * s_out];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    let seg = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= in_shape.height as isize {
                        seg.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[iy as usize * in_shape.width..];
                    for (ox, slot) in seg.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        *slot = if ix < 0 || ix >= in_shape.width as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
                r += 1;
            }
        }
    }
}

/// Gradients of [`conv2d`] with respect to all three inputs.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Vec<f64>,
}

/// Backward pass: scatter the upstream gradient through the same tap
/// pattern the forward pass gathered. Plain loops; gradient evaluation is
/// never on the timing path.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    upstream: &Tensor,
) -> Result<ConvGrads> {
    let in_shape = input.shape();
    let k_shape = kernel.shape();
    let up_shape = upstream.shape();
    let expected = Shape::new(
        in_shape.batch,
        k_shape.batch,
        output_extent(in_shape.height, k_shape.height, stride, padding)?,
        output_extent(in_shape.width, k_shape.width, stride, padding)?,
    );
    if up_shape != expected {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            left: up_shape,
            right: expected,
        });
    }

    let mut d_input = Tensor::zeros(in_shape);
    let mut d_kernel = Tensor::zeros(k_shape);
    let mut d_bias = vec![0.0; k_shape.batch];

    for b in 0..in_shape.batch {
        for oc in 0..k_shape.batch {
            for oy in 0..up_shape.height {
                for ox in 0..up_shape.width {
                    let g = upstream.get(b, oc, oy, ox);
                    if g == 0.0 {
                        continue;
                    }
                    d_bias[oc] += g;
                    for ic in 0..k_shape.channels {
                        for ky in 0..k_shape.height {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= in_shape.height as isize {
                                continue;
                            }
                            for kx in 0..k_shape.width {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= in_shape.width as isize {
                                    continue;
                                }
                                let x = input.get(b, ic, iy as usize, ix as usize);
                                let w = kernel.get(oc, ic, ky, kx);
                                *d_kernel
                                    .data_mut()
                                    .get_mut(k_shape.index(oc, ic, ky, kx))
                                    .expect("kernel index in range") += g * x;
                                *d_input
                                    .data_mut()
                                    .get_mut(in_shape.index(b, ic, iy as usize, ix as usize))
                                    .expect("input index in range") += g * w;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: d_input,
        kernel: d_kernel,
        bias: d_bias,
    })
}
