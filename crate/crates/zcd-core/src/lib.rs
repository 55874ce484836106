//! Deterministic building blocks for a single-stage detection network with a
//! scale-attention feature pyramid and sequentially wired prediction heads.
//!
//! The crate provides:
//!
//! * dense rank-4 tensors ([`tensor::Tensor`]) with f64 storage,
//! * the small set of kernels the network needs (convolution, bilinear
//!   resize, global average pooling, fully connected layers, branch softmax,
//!   weighted fusion) with hand-written backward passes ([`ops`]),
//! * a tape-based computation graph ([`graph::Graph`]) that records forward
//!   evaluation and replays it in reverse for gradients,
//! * the network itself: backbone stubs and pyramid plumbing ([`pyramid`]),
//!   scale-attention fusion ([`safpn`]), prediction heads ([`heads`]) and the
//!   assembled model ([`model`]),
//! * analysis passes that never touch pixel data: parameter counting, FLOP
//!   accounting, finite-difference gradient verification and the
//!   property-check registry ([`analysis`]).
//!
//! Everything is `no_std` + `alloc`; all randomness flows through one seeded
//! generator so every forward pass, count and check is reproducible bit for
//! bit. IO, file formats and timing live in the companion CLI crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod graph;
pub mod heads;
pub mod init;
pub mod model;
pub mod ops;
pub mod pyramid;
pub mod rng;
pub mod safpn;
pub mod tensor;

pub use error::Error;
pub use tensor::{Shape, Tensor};

/// Channel width of every pyramid level and head tower.
pub const PYRAMID_CHANNELS: usize = 256;

/// Pyramid levels carried by the network, coarsest stride last.
pub const PYRAMID_LEVELS: [usize; 5] = [3, 4, 5, 6, 7];

/// Convenient alias for fallible operations in this crate.
pub type Result<T> = core::result::Result<T, Error>;
