//! Weight initialization rules shared by every trainable layer.
//!
//! Convolution and fully connected weights draw from a zero-mean Gaussian
//! with standard deviation 0.01; biases start at zero. The one exception is
//! the classification output layer, whose bias starts at `-ln 99` so the
//! initial class probability after a sigmoid is 0.01 — see
//! [`focal_class_bias`].

use alloc::vec;

use crate::ops::{ConvParams, LinearParams};
use crate::rng::{DetRng, Distribution};
use crate::tensor::Shape;
use crate::Result;

/// Standard deviation for freshly drawn weights.
pub const WEIGHT_STD: f64 = 0.01;

/// Target probability a freshly initialized classifier assigns to each
/// class.
pub const CLASS_PRIOR: f64 = 0.01;

/// Classification output bias: `-ln((1 - p) / p)` with `p = 0.01`, i.e.
/// `-ln 99`, about -4.595.
pub fn focal_class_bias() -> f64 {
    -libm::log((1.0 - CLASS_PRIOR) / CLASS_PRIOR)
}

fn weight_draw() -> Distribution {
    Distribution::Gaussian {
        mean: 0.0,
        std: WEIGHT_STD,
    }
}

/// A convolution with Gaussian weights and zero bias.
pub fn conv(
    rng: &mut DetRng,
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<ConvParams> {
    conv_with_bias(rng, out_c, in_c, k, stride, padding, 0.0)
}

/// A convolution with Gaussian weights and a constant bias.
pub fn conv_with_bias(
    rng: &mut DetRng,
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
    bias: f64,
) -> Result<ConvParams> {
    let kernel = rng.tensor(weight_draw(), Shape::new(out_c, in_c, k, k))?;
    ConvParams::new(kernel, vec![bias; out_c], stride, padding)
}

/// A fully connected layer with Gaussian weights and zero bias.
pub fn linear(rng: &mut DetRng, out_dim: usize, in_dim: usize) -> Result<LinearParams> {
    let weight = rng.tensor(weight_draw(), Shape::new(out_dim, in_dim, 1, 1))?;
    LinearParams::new(weight, vec![0.0; out_dim])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_bias_is_minus_ln_99() {
        let bias = focal_class_bias();
        assert!((bias - (-(99.0f64).ln())).abs() < 1e-12);
        assert!((bias + 4.59511985013459).abs() < 1e-10);
    }

    #[test]
    fn conv_init_has_zero_bias_and_small_weights() {
        let mut rng = DetRng::new(42);
        let layer = conv(&mut rng, 16, 8, 3, 1, 1).unwrap();
        assert!(layer.bias.iter().all(|&b| b == 0.0));
        let data = layer.kernel.data();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let std = (data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / data.len() as f64)
            .sqrt();
        assert!(mean.abs() < 5e-3, "mean {mean}");
        assert!((std - WEIGHT_STD).abs() < 5e-3, "std {std}");
    }

    #[test]
    fn linear_init_has_zero_bias() {
        let mut rng = DetRng::new(42);
        let layer = linear(&mut rng, 32, 256).unwrap();
        assert!(layer.bias.iter().all(|&b| b == 0.0));
        assert_eq!(layer.param_count(), 32 * 256 + 32);
    }

    #[test]
    fn draws_are_seed_deterministic() {
        let a = conv(&mut DetRng::new(7), 4, 4, 3, 1, 1).unwrap();
        let b = conv(&mut DetRng::new(7), 4, 4, 3, 1, 1).unwrap();
        assert_eq!(a.kernel, b.kernel);
    }
}
