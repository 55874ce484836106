//! Backbone stubs, extra-level generation and trunk parameter bookkeeping.
//!
//! The real networks this crate reasons about sit on deep residual trunks.
//! Running one at full size is beside the point here — what matters is that
//! every downstream shape, parameter count and FLOP figure is right. So the
//! backbone is a thin convolutional stub that reproduces the trunk's output
//! *shapes* (strides 8/16/32 with the catalogued channel widths), while
//! parameter reports for the faithful profiles substitute the closed-form
//! count of the residual trunk being stood in for. The `tiny` profile is
//! self-contained: its stub weights are its trunk.

use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::init;
use crate::ops::ConvParams;
use crate::rng::DetRng;
use crate::tensor::Shape;
use crate::{Error, Result};

/// Internal width of the stub's downsampling chain.
const STUB_WIDTH: usize = 8;

/// Which trunk the backbone stands in for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneProfile {
    /// 50-layer residual trunk: C3/C4/C5 carry 512/1024/2048 channels.
    FaithfulR50,
    /// 101-layer residual trunk: same widths, deeper stage 4.
    FaithfulR101,
    /// Desk-scale stub with 8/16/32-channel outputs; counts its own weights.
    Tiny,
}

impl BackboneProfile {
    /// Default channel widths of the C3, C4, C5 feature maps. The tiny
    /// profile's widths can be overridden at build time.
    pub fn default_channels(&self) -> [usize; 3] {
        match self {
            BackboneProfile::FaithfulR50 | BackboneProfile::FaithfulR101 => [512, 1024, 2048],
            BackboneProfile::Tiny => [8, 16, 32],
        }
    }

    /// Depth of the catalogued residual trunk, if this profile mirrors one.
    pub fn trunk_depth(&self) -> Option<usize> {
        match self {
            BackboneProfile::FaithfulR50 => Some(50),
            BackboneProfile::FaithfulR101 => Some(101),
            BackboneProfile::Tiny => None,
        }
    }

    /// Configuration token naming this profile.
    pub fn token(&self) -> &'static str {
        match self {
            BackboneProfile::FaithfulR50 => "faithful-r50",
            BackboneProfile::FaithfulR101 => "faithful-r101",
            BackboneProfile::Tiny => "tiny",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "faithful-r50" => Some(BackboneProfile::FaithfulR50),
            "faithful-r101" => Some(BackboneProfile::FaithfulR101),
            "tiny" => Some(BackboneProfile::Tiny),
            _ => None,
        }
    }
}

/// Closed-form parameter count of a bottleneck residual trunk (stem plus
/// four stages, batch-norm scale/shift pairs included, classifier head
/// excluded). Supports depths 50 and 101.
pub fn resnet_trunk_param_count(depth: usize) -> Result<u64> {
    let stage_blocks: [u64; 4] = match depth {
        50 => [3, 4, 6, 3],
        101 => [3, 4, 23, 3],
        _ => return Err(Error::UnsupportedDepth { depth }),
    };
    let conv = |k: u64, in_c: u64, out_c: u64| k * k * in_c * out_c;
    let bn = |c: u64| 2 * c;
    // 7x7 stem into 64 channels plus its norm.
    let mut total = conv(7, 3, 64) + bn(64);
    let mut in_c = 64u64;
    for (stage, &blocks) in stage_blocks.iter().enumerate() {
        let mid = 64u64 << stage;
        let out = mid * 4;
        for block in 0..blocks {
            total += conv(1, in_c, mid) + bn(mid);
            total += conv(3, mid, mid) + bn(mid);
            total += conv(1, mid, out) + bn(out);
            if block == 0 {
                // Projection shortcut where the width or stride changes.
                total += conv(1, in_c, out) + bn(out);
            }
            in_c = out;
        }
    }
    Ok(total)
}

/// The shape-faithful backbone stub.
///
/// A strided stem and four strided 3x3 stages carry an 8-channel feature
/// down to stride 32; 1x1 projections tap strides 8, 16 and 32 and widen
/// them to the profile's channel counts.
#[derive(Debug, Clone)]
pub struct BackboneStub {
    pub profile: BackboneProfile,
    pub stem: ConvParams,
    pub downs: [ConvParams; 4],
    pub projections: [ConvParams; 3],
}

impl BackboneStub {
    /// Build with the profile's default channel widths.
    pub fn build(profile: BackboneProfile, rng: &mut DetRng) -> Result<Self> {
        Self::build_with_channels(profile, profile.default_channels(), rng)
    }

    /// Draw stub weights from the shared init rules, consuming the stream
    /// in order: stem, the four downsampling convs, then the three
    /// projections coarsest-last. `channels` gives the C3/C4/C5 widths
    /// (only the tiny profile should override its defaults).
    pub fn build_with_channels(
        profile: BackboneProfile,
        channels: [usize; 3],
        rng: &mut DetRng,
    ) -> Result<Self> {
        if channels.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument {
                op: "build_backbone_stub",
                detail: alloc::format!(
                    "channel widths must be positive, got {channels:?}"
                ),
            });
        }
        let stem = init::conv(rng, STUB_WIDTH, 3, 3, 2, 1)?;
        let downs = [
            init::conv(rng, STUB_WIDTH, STUB_WIDTH, 3, 2, 1)?,
            init::conv(rng, STUB_WIDTH, STUB_WIDTH, 3, 2, 1)?,
            init::conv(rng, STUB_WIDTH, STUB_WIDTH, 3, 2, 1)?,
            init::conv(rng, STUB_WIDTH, STUB_WIDTH, 3, 2, 1)?,
        ];
        let [c3, c4, c5] = channels;
        let projections = [
            init::conv(rng, c3, STUB_WIDTH, 1, 1, 0)?,
            init::conv(rng, c4, STUB_WIDTH, 1, 1, 0)?,
            init::conv(rng, c5, STUB_WIDTH, 1, 1, 0)?,
        ];
        Ok(BackboneStub {
            profile,
            stem,
            downs,
            projections,
        })
    }

    /// Run the stub, returning the C3, C4, C5 feature nodes.
    pub fn forward(&self, g: &mut Graph, image: NodeId) -> Result<[NodeId; 3]> {
        let conv_relu = |g: &mut Graph, p: &ConvParams, x: NodeId, tag: &str| {
            let kernel = g.parameter(p.kernel.clone(), alloc::format!("backbone.{tag}.kernel"));
            let bias = g.parameter(
                bias_tensor(&p.bias),
                alloc::format!("backbone.{tag}.bias"),
            );
            let y = g.conv(x, kernel, bias, p.stride, p.padding)?;
            g.relu(y)
        };
        let mut x = conv_relu(g, &self.stem, image, "stem")?;
        let mut taps = Vec::with_capacity(3);
        for (i, down) in self.downs.iter().enumerate() {
            x = conv_relu(g, down, x, &alloc::format!("down{}", i + 1))?;
            if i >= 1 {
                taps.push(x);
            }
        }
        let mut levels = [x; 3];
        for (i, proj) in self.projections.iter().enumerate() {
            let kernel = g.parameter(
                proj.kernel.clone(),
                alloc::format!("backbone.proj{}.kernel", i + 3),
            );
            let bias = g.parameter(
                bias_tensor(&proj.bias),
                alloc::format!("backbone.proj{}.bias", i + 3),
            );
            levels[i] = g.conv(taps[i], kernel, bias, proj.stride, proj.padding)?;
        }
        Ok(levels)
    }

    /// Channel widths this stub actually emits for C3, C4, C5.
    pub fn level_channels(&self) -> [usize; 3] {
        [
            self.projections[0].out_channels(),
            self.projections[1].out_channels(),
            self.projections[2].out_channels(),
        ]
    }

    /// Parameters actually stored in the stub arrays.
    pub fn scaffold_param_count(&self) -> u64 {
        let mut total = self.stem.param_count() as u64;
        for d in &self.downs {
            total += d.param_count() as u64;
        }
        for p in &self.projections {
            total += p.param_count() as u64;
        }
        total
    }

    /// Trunk size used in parameter reports: the catalogued residual trunk
    /// for faithful profiles, the stub's own weights for `tiny`.
    pub fn reported_trunk_params(&self) -> u64 {
        match self.profile.trunk_depth() {
            Some(depth) => {
                resnet_trunk_param_count(depth).expect("catalogued depths always resolve")
            }
            None => self.scaffold_param_count(),
        }
    }
}

fn bias_tensor(bias: &[f64]) -> crate::tensor::Tensor {
    crate::tensor::Tensor::from_vec(Shape::new(1, bias.len(), 1, 1), bias.to_vec())
        .expect("bias length matches shape")
}

/// The two extra pyramid inputs above C5, each a stride-2 3x3 convolution.
#[derive(Debug, Clone)]
pub struct ExtraLevels {
    pub conv6: ConvParams,
    pub conv7: ConvParams,
    /// Insert a ReLU between the two convolutions. Off by default; counts
    /// and shapes are unaffected either way.
    pub relu_between: bool,
}

impl ExtraLevels {
    pub fn build(in_channels: usize, relu_between: bool, rng: &mut DetRng) -> Result<Self> {
        let conv6 = init::conv(rng, crate::PYRAMID_CHANNELS, in_channels, 3, 2, 1)?;
        let conv7 = init::conv(rng, crate::PYRAMID_CHANNELS, crate::PYRAMID_CHANNELS, 3, 2, 1)?;
        Ok(ExtraLevels {
            conv6,
            conv7,
            relu_between,
        })
    }

    /// Produce the C6 and C7 nodes from the source feature. The source must
    /// be at least 2x2 so the strided convolutions have room to move.
    pub fn forward(&self, g: &mut Graph, src: NodeId) -> Result<(NodeId, NodeId)> {
        let shape = g.value(src)?.shape();
        if shape.height < 2 || shape.width < 2 {
            return Err(Error::SpatialTooSmall {
                op: "extend_levels",
                height: shape.height,
                width: shape.width,
                min: 2,
            });
        }
        let k6 = g.parameter(self.conv6.kernel.clone(), "extras.conv6.kernel");
        let b6 = g.parameter(bias_tensor(&self.conv6.bias), "extras.conv6.bias");
        let c6 = g.conv(src, k6, b6, self.conv6.stride, self.conv6.padding)?;
        let c7_src = if self.relu_between { g.relu(c6)? } else { c6 };
        let k7 = g.parameter(self.conv7.kernel.clone(), "extras.conv7.kernel");
        let b7 = g.parameter(bias_tensor(&self.conv7.bias), "extras.conv7.bias");
        let c7 = g.conv(c7_src, k7, b7, self.conv7.stride, self.conv7.padding)?;
        Ok((c6, c7))
    }

    pub fn param_count(&self) -> u64 {
        (self.conv6.param_count() + self.conv7.param_count()) as u64
    }
}

/// Spatial extent after one stride-2 3x3 convolution with padding 1.
pub fn halved(extent: usize) -> usize {
    (extent - 1) / 2 + 1
}

/// Spatial extents of pyramid levels 3..=7 for a given image size.
pub fn level_shapes(image_h: usize, image_w: usize) -> [(usize, usize); 5] {
    let mut h = image_h;
    let mut w = image_w;
    // Stem plus two downsampling stages reach stride 8 (level 3).
    for _ in 0..3 {
        h = halved(h);
        w = halved(w);
    }
    let mut shapes = [(0, 0); 5];
    shapes[0] = (h, w);
    for i in 1..5 {
        h = halved(h);
        w = halved(w);
        shapes[i] = (h, w);
    }
    shapes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn trunk_counts_match_catalogue() {
        assert_eq!(resnet_trunk_param_count(50).unwrap(), 23_508_032);
        assert_eq!(resnet_trunk_param_count(101).unwrap(), 42_500_160);
        // The depth difference is 17 extra stage-4 blocks.
        assert_eq!(
            resnet_trunk_param_count(101).unwrap() - resnet_trunk_param_count(50).unwrap(),
            18_992_128
        );
    }

    #[test]
    fn unsupported_depths_rejected() {
        assert!(matches!(
            resnet_trunk_param_count(34),
            Err(Error::UnsupportedDepth { depth: 34 })
        ));
    }

    #[test]
    fn tiny_stub_parameter_budget() {
        let mut rng = DetRng::new(42);
        let stub = BackboneStub::build(BackboneProfile::Tiny, &mut rng).unwrap();
        // Stem 224, four downs at 584 each, projections 72 + 144 + 288.
        assert_eq!(stub.scaffold_param_count(), 3_064);
        assert_eq!(stub.reported_trunk_params(), 3_064);
    }

    #[test]
    fn tiny_channel_override() {
        let mut rng = DetRng::new(42);
        let stub =
            BackboneStub::build_with_channels(BackboneProfile::Tiny, [4, 8, 12], &mut rng)
                .unwrap();
        assert_eq!(stub.level_channels(), [4, 8, 12]);
        assert!(matches!(
            BackboneStub::build_with_channels(BackboneProfile::Tiny, [0, 8, 12], &mut rng),
            Err(Error::InvalidArgument { .. })
        ));
    }

    #[test]
    fn faithful_profiles_report_catalogued_trunks() {
        let mut rng = DetRng::new(42);
        let stub = BackboneStub::build(BackboneProfile::FaithfulR50, &mut rng).unwrap();
        assert_eq!(stub.reported_trunk_params(), 23_508_032);
        let stub = BackboneStub::build(BackboneProfile::FaithfulR101, &mut rng).unwrap();
        assert_eq!(stub.reported_trunk_params(), 42_500_160);
    }

    #[test]
    fn stub_forward_shapes_and_channels() {
        let mut rng = DetRng::new(42);
        let stub = BackboneStub::build(BackboneProfile::Tiny, &mut rng).unwrap();
        let mut g = Graph::new();
        let image = g.input(Tensor::zeros(Shape::new(1, 3, 64, 80)));
        let [c3, c4, c5] = stub.forward(&mut g, image).unwrap();
        assert_eq!(g.value(c3).unwrap().shape(), Shape::new(1, 8, 8, 10));
        assert_eq!(g.value(c4).unwrap().shape(), Shape::new(1, 16, 4, 5));
        assert_eq!(g.value(c5).unwrap().shape(), Shape::new(1, 32, 2, 3));
    }

    #[test]
    fn extras_shapes_and_minimum() {
        let mut rng = DetRng::new(42);
        let extras = ExtraLevels::build(32, false, &mut rng).unwrap();
        let mut g = Graph::new();
        let c5 = g.input(Tensor::zeros(Shape::new(1, 32, 2, 3)));
        let (c6, c7) = extras.forward(&mut g, c5).unwrap();
        assert_eq!(g.value(c6).unwrap().shape(), Shape::new(1, 256, 1, 2));
        assert_eq!(g.value(c7).unwrap().shape(), Shape::new(1, 256, 1, 1));

        let tiny = g.input(Tensor::zeros(Shape::new(1, 32, 1, 3)));
        assert!(matches!(
            extras.forward(&mut g, tiny),
            Err(Error::SpatialTooSmall { .. })
        ));
    }

    #[test]
    fn extras_param_count() {
        let mut rng = DetRng::new(42);
        let extras = ExtraLevels::build(2048, false, &mut rng).unwrap();
        assert_eq!(extras.param_count(), 4_718_848 + 590_080);
        let extras = ExtraLevels::build(256, false, &mut rng).unwrap();
        assert_eq!(extras.param_count(), 590_080 * 2);
    }

    #[test]
    fn level_shape_chain() {
        assert_eq!(
            level_shapes(256, 320),
            [(32, 40), (16, 20), (8, 10), (4, 5), (2, 3)]
        );
        assert_eq!(
            level_shapes(64, 80),
            [(8, 10), (4, 5), (2, 3), (1, 2), (1, 1)]
        );
    }

    #[test]
    fn profile_tokens_round_trip() {
        for profile in [
            BackboneProfile::FaithfulR50,
            BackboneProfile::FaithfulR101,
            BackboneProfile::Tiny,
        ] {
            assert_eq!(BackboneProfile::parse(profile.token()), Some(profile));
        }
        assert_eq!(BackboneProfile::parse("resnet"), None);
    }
}
