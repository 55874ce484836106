//! Dense rank-4 tensors in batch/channel/height/width order.
//!
//! Storage is always `f64`: the crate trades speed for exactly reproducible
//! arithmetic, and every documented tolerance assumes double precision.
//! Data is row-major with the width axis fastest, so `(b, c, y, x)` maps to
//! `((b * C + c) * H + y) * W + x`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::Result;

/// Extents of a rank-4 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Shape {
            batch,
            channels,
            height,
            width,
        }
    }

    /// Total number of elements.
    pub const fn len(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat offset of `(b, c, y, x)`.
    #[inline]
    pub const fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.channels + c) * self.height + y) * self.width + x
    }

    /// Elements per `(batch, channel)` plane.
    pub const fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.height, self.width
        )
    }
}

/// A dense rank-4 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Constant-valued tensor.
    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Wrap an existing buffer; its length must match the shape exactly.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::LengthMismatch {
                op: "tensor::from_vec",
                expected: shape.len(),
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.shape.index(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, value: f64) {
        let idx = self.shape.index(b, c, y, x);
        self.data[idx] = value;
    }

    /// Contiguous `H*W` plane for one `(batch, channel)` pair.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let start = self.shape.index(b, c, 0, 0);
        &self.data[start..start + self.shape.plane()]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let start = self.shape.index(b, c, 0, 0);
        let len = self.shape.plane();
        &mut self.data[start..start + len]
    }

    /// True when every element is a finite number.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Serialize as text: a `B C H W` header line, then the elements in
    /// row-major order, one `(batch, channel, row)` line each. Values use
    /// Rust's shortest round-trip decimal form, so parsing the text back
    /// reproduces the tensor bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&alloc::format!(
            "{} {} {} {}\n",
            self.shape.batch,
            self.shape.channels,
            self.shape.height,
            self.shape.width
        ));
        for b in 0..self.shape.batch {
            for c in 0..self.shape.channels {
                for y in 0..self.shape.height {
                    let row_start = self.shape.index(b, c, y, 0);
                    let row = &self.data[row_start..row_start + self.shape.width];
                    for (i, v) in row.iter().enumerate() {
                        if i > 0 {
                            out.push(' ');
                        }
                        out.push_str(&v.to_string());
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Parse the format written by [`Tensor::to_text`]. Any whitespace is
    /// accepted between values.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut dim = |name: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::ParseTensor {
                    detail: alloc::format!("missing {name} in header"),
                })?
                .parse::<usize>()
                .map_err(|_| Error::ParseTensor {
                    detail: alloc::format!("{name} is not an unsigned integer"),
                })
        };
        let shape = Shape::new(dim("batch")?, dim("channels")?, dim("height")?, dim("width")?);
        let mut data = Vec::with_capacity(shape.len());
        for token in tokens {
            let value = token.parse::<f64>().map_err(|_| Error::ParseTensor {
                detail: alloc::format!("bad value {token:?}"),
            })?;
            data.push(value);
        }
        if data.len() != shape.len() {
            return Err(Error::ParseTensor {
                detail: alloc::format!(
                    "header promises {} values, found {}",
                    shape.len(),
                    data.len()
                ),
            });
        }
        Ok(Tensor { shape, data })
    }
}
