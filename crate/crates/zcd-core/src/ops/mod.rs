//! Forward and backward kernels for every operation the network uses.
//!
//! Each kernel is a free function over [`Tensor`](crate::tensor::Tensor)s;
//! the graph module wires them into a tape. Backward functions compute exact
//! derivatives of the forward implementation (not of an idealized formula),
//! which is what makes finite-difference verification meaningful.

pub mod conv;
pub mod fuse;
pub mod linear;
pub mod pointwise;
pub mod pool;
pub mod resize;
pub mod softmax;

pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvParams};
pub use fuse::{fuse, fuse_backward, FuseGrads};
pub use linear::{linear, linear_backward, LinearGrads, LinearParams};
pub use pointwise::{
    add, add_backward, channel_affine, channel_affine_backward, relu, relu_backward, scale_mul,
    scale_mul_backward, AffineGrads, ScaleGrads,
};
pub use pool::{global_avg_pool, global_avg_pool_backward};
pub use resize::{bilinear_resize, bilinear_resize_backward};
pub use softmax::{softmax_branches, softmax_branches_backward};
