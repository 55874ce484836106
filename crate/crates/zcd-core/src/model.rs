//! Whole-model assembly: backbone sources, extra levels, pyramid, heads.
//!
//! `DetectionModel` owns one copy of every weight and builds forward graphs
//! on demand. Construction consumes a single deterministic random stream in
//! a fixed order — backbone, extra levels, pyramid, heads — so a config and
//! seed pin every parameter in the model.

use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::heads::{HeadAssembly, HeadConfig, HeadMaps, HeadScheme};
use crate::pyramid::{BackboneProfile, BackboneStub, ExtraLevels};
use crate::rng::DetRng;
use crate::safpn::{FpnForward, FpnScheme, SaFpn};
use crate::tensor::Tensor;
use crate::{Error, Result, PYRAMID_CHANNELS};

/// Default reduction width of the attention blocks: channels/16, floored
/// at 32.
pub const fn default_attention_dim() -> usize {
    let reduced = PYRAMID_CHANNELS / 16;
    if reduced > 32 {
        reduced
    } else {
        32
    }
}

/// Everything needed to build a model deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub profile: BackboneProfile,
    /// C3/C4/C5 width override; valid only with the tiny profile, whose
    /// faithful siblings have a fixed channel signature.
    pub tiny_channels: Option<[usize; 3]>,
    pub fpn_scheme: FpnScheme,
    pub head_scheme: HeadScheme,
    pub head: HeadConfig,
    pub attention_dim: usize,
    pub attention_relu: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            profile: BackboneProfile::FaithfulR50,
            tiny_channels: None,
            fpn_scheme: FpnScheme::AttentionAllLight,
            head_scheme: HeadScheme::ClsFirst,
            head: HeadConfig::anchor_based(9, 80),
            attention_dim: default_attention_dim(),
            attention_relu: true,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        if self.attention_dim == 0 {
            return Err(Error::InvalidArgument {
                op: "model_config",
                detail: alloc::string::String::from("attention_dim must be positive"),
            });
        }
        if self.tiny_channels.is_some() && self.profile != BackboneProfile::Tiny {
            return Err(Error::InvalidArgument {
                op: "model_config",
                detail: alloc::string::String::from(
                    "tiny_channels applies only to the tiny profile",
                ),
            });
        }
        Ok(())
    }

    fn source_channels(&self) -> [usize; 3] {
        self.tiny_channels
            .unwrap_or_else(|| self.profile.default_channels())
    }
}

/// One forward pass: the graph plus handles into it.
#[derive(Debug)]
pub struct ForwardPass {
    pub graph: Graph,
    pub image: NodeId,
    /// C3..C7 source nodes in level order.
    pub sources: [NodeId; 5],
    pub pyramid: FpnForward,
    /// Head outputs for levels 3..7 in ascending order.
    pub head_maps: Vec<HeadMaps>,
}

/// The assembled detector.
#[derive(Debug, Clone)]
pub struct DetectionModel {
    pub config: ModelConfig,
    pub backbone: BackboneStub,
    pub extras: ExtraLevels,
    pub fpn: SaFpn,
    pub heads: HeadAssembly,
}

impl DetectionModel {
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = DetRng::new(config.seed);
        let channels = config.source_channels();
        let backbone = BackboneStub::build_with_channels(config.profile, channels, &mut rng)?;
        // The per-anchor family derives C6 from the raw C5 stage; the
        // per-location family derives it from C5's 1x1 lateral projection,
        // so its extras work at the pyramid width.
        let extras_in = if config.head.anchor_free {
            PYRAMID_CHANNELS
        } else {
            channels[2]
        };
        let extras = ExtraLevels::build(extras_in, false, &mut rng)?;
        let fpn = SaFpn::build(
            config.fpn_scheme,
            channels,
            config.attention_dim,
            config.attention_relu,
            &mut rng,
        )?;
        let heads = HeadAssembly::build(config.head_scheme, config.head, &mut rng)?;
        Ok(DetectionModel {
            config,
            backbone,
            extras,
            fpn,
            heads,
        })
    }

    /// Trunk size for reports: catalogued for faithful profiles, the stub's
    /// own weights for tiny.
    pub fn trunk_params(&self) -> u64 {
        self.backbone.reported_trunk_params()
    }

    /// Pyramid construction cost: laterals, post convs, attention blocks,
    /// and the two extra-level convolutions.
    pub fn fpn_params(&self) -> u64 {
        self.fpn.param_count() + self.extras.param_count()
    }

    pub fn head_params(&self) -> u64 {
        self.heads.param_count()
    }

    pub fn total_params(&self) -> u64 {
        self.trunk_params() + self.fpn_params() + self.head_params()
    }

    /// Run the whole detector on an image (3 channels). The anchor-free
    /// extras path sources the strided convolutions from C5's lateral
    /// projection; the projection is computed once and handed to the
    /// pyramid, so the shared weights appear — and run — exactly once.
    pub fn forward(&self, image: &Tensor) -> Result<ForwardPass> {
        let mut graph = Graph::new();
        let got = image.shape().channels;
        if got != 3 {
            return Err(Error::ChannelMismatch {
                op: "model_forward",
                expected: 3,
                got,
            });
        }
        let image_node = graph.input(image.clone());
        let [c3, c4, c5] = self.backbone.forward(&mut graph, image_node)?;
        let projected = [
            self.fpn.project(&mut graph, 0, c3)?,
            self.fpn.project(&mut graph, 1, c4)?,
            self.fpn.project(&mut graph, 2, c5)?,
        ];
        let extras_src = if self.config.head.anchor_free {
            projected[2]
        } else {
            c5
        };
        let (c6, c7) = self.extras.forward(&mut graph, extras_src)?;
        let sources = [c3, c4, c5, c6, c7];
        let pyramid = self.fpn.forward_projected(
            &mut graph,
            [projected[0], projected[1], projected[2], c6, c7],
        )?;
        let mut head_maps = Vec::with_capacity(5);
        for (idx, &p) in pyramid.levels.iter().enumerate() {
            head_maps.push(self.heads.forward(&mut graph, p, idx)?);
        }
        Ok(ForwardPass {
            graph,
            image: image_node,
            sources,
            pyramid,
            head_maps,
        })
    }
}
