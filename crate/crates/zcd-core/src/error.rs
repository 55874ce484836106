//! Error type shared by every fallible operation in the crate.

use alloc::string::String;
use core::fmt;

use crate::tensor::Shape;

/// Why a kernel, graph operation or analysis pass refused to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two tensors that must agree in shape do not; names both shapes.
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    /// A tensor arrived with the wrong channel count for the consumer.
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    /// A flat buffer does not hold the number of elements its shape implies.
    LengthMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    /// The requested output would have no elements (e.g. a convolution whose
    /// kernel does not fit, or a resize to zero pixels).
    EmptyOutput { op: &'static str, detail: String },
    /// Spatial extent too small for the consumer (pyramid extension needs
    /// room to stride).
    SpatialTooSmall {
        op: &'static str,
        height: usize,
        width: usize,
        min: usize,
    },
    /// A graph id that this graph never produced.
    UnknownNode { index: usize },
    /// Gradient requested from a node that is not a leaf, or a leaf mutation
    /// aimed at a computed node.
    NotALeaf { index: usize },
    /// Backbone depth outside the catalogue of supported trunks.
    UnsupportedDepth { depth: usize },
    /// A numeric argument outside its documented domain.
    InvalidArgument { op: &'static str, detail: String },
    /// Too few timing rounds for a defensible median.
    TooFewRounds { rounds: usize, min: usize },
    /// A NaN or infinity surfaced where finite values are required.
    NonFinite { location: String },
    /// Text that should encode a tensor could not be parsed.
    ParseTensor { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch between {left} and {right}")
            }
            Error::ChannelMismatch { op, expected, got } => {
                write!(f, "{op}: expected {expected} channels, got {got}")
            }
            Error::LengthMismatch { op, expected, got } => {
                write!(f, "{op}: expected {expected} elements, got {got}")
            }
            Error::EmptyOutput { op, detail } => {
                write!(f, "{op}: output would be empty ({detail})")
            }
            Error::SpatialTooSmall {
                op,
                height,
                width,
                min,
            } => write!(
                f,
                "{op}: spatial extent {height}x{width} is below the {min}x{min} minimum"
            ),
            Error::UnknownNode { index } => {
                write!(f, "graph: node {index} was never forwarded through this graph")
            }
            Error::NotALeaf { index } => {
                write!(f, "graph: node {index} is not a leaf")
            }
            Error::UnsupportedDepth { depth } => {
                write!(f, "backbone: no trunk catalogued for depth {depth}")
            }
            Error::InvalidArgument { op, detail } => write!(f, "{op}: {detail}"),
            Error::TooFewRounds { rounds, min } => {
                write!(f, "bench: {rounds} rounds requested, need at least {min}")
            }
            Error::NonFinite { location } => {
                write!(f, "non-finite value at {location}")
            }
            Error::ParseTensor { detail } => write!(f, "tensor parse: {detail}"),
        }
    }
}

impl core::error::Error for Error {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn display_names_both_shapes() {
        let err = Error::ShapeMismatch {
            op: "elementwise_add",
            left: Shape::new(1, 2, 3, 4),
            right: Shape::new(1, 2, 3, 5),
        };
        let msg = alloc::format!("{err}");
        assert!(msg.contains("1x2x3x4"), "{msg}");
        assert!(msg.contains("1x2x3x5"), "{msg}");
        assert!(msg.contains("elementwise_add"), "{msg}");
    }

    #[test]
    fn display_covers_every_variant() {
        use alloc::string::ToString;
        let samples = [
            Error::ChannelMismatch {
                op: "conv2d",
                expected: 3,
                got: 4,
            },
            Error::LengthMismatch {
                op: "from_vec",
                expected: 6,
                got: 5,
            },
            Error::EmptyOutput {
                op: "conv2d",
                detail: "kernel larger than padded input".to_string(),
            },
            Error::SpatialTooSmall {
                op: "extend_levels",
                height: 1,
                width: 1,
                min: 2,
            },
            Error::UnknownNode { index: 9 },
            Error::NotALeaf { index: 2 },
            Error::UnsupportedDepth { depth: 34 },
            Error::InvalidArgument {
                op: "uniform",
                detail: "empty range".to_string(),
            },
            Error::TooFewRounds { rounds: 3, min: 10 },
            Error::NonFinite {
                location: "loss".to_string(),
            },
            Error::ParseTensor {
                detail: "bad header".to_string(),
            },
        ];
        for err in samples {
            assert!(!err.to_string().is_empty());
        }
    }
}
