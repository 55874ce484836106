//! Detection heads: parallel and sequential tower wirings over the pyramid.
//!
//! One assembly holds two four-conv towers (classification and regression)
//! plus the output convolutions, and serves every pyramid level with the
//! same weights. The three schemes wire identical layers differently:
//!
//! * `Parallel` — both towers read the pyramid level independently.
//! * `ClsFirst` — the classification tower runs first; its output (the
//!   prior category feature map) feeds both the classification output and
//!   the regression tower.
//! * `RegFirst` — the mirror image: the regression tower runs first.
//!
//! Because all three arrangements apply the same layer multiset to
//! same-shaped activations, parameter and FLOP counts cannot differ between
//! them — which is the point.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::init;
use crate::ops::ConvParams;
use crate::rng::DetRng;
use crate::tensor::{Shape, Tensor};
use crate::{Error, Result, PYRAMID_CHANNELS};

/// Number of convolutions in each tower.
pub const TOWER_DEPTH: usize = 4;

/// How the towers are wired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadScheme {
    Parallel,
    ClsFirst,
    RegFirst,
}

impl HeadScheme {
    pub const ALL: [HeadScheme; 3] = [
        HeadScheme::Parallel,
        HeadScheme::ClsFirst,
        HeadScheme::RegFirst,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            HeadScheme::Parallel => "parallel",
            HeadScheme::ClsFirst => "cls-first",
            HeadScheme::RegFirst => "reg-first",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.token() == token)
    }
}

impl core::fmt::Display for HeadScheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.token())
    }
}

/// Output parameterization of the heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadConfig {
    /// Anchor-free (per-location) outputs instead of per-anchor outputs.
    pub anchor_free: bool,
    /// Anchors per location; forced to 1 in the anchor-free profile.
    pub anchors_per_loc: usize,
    pub num_classes: usize,
    /// Emit a centerness map from the classification tower (anchor-free
    /// profile only).
    pub centerness: bool,
    /// Count and apply per-layer channel-affine normalization parameters in
    /// the towers.
    pub norm_affine: bool,
}

impl HeadConfig {
    /// Per-anchor outputs: A anchors by K classes, no centerness, no
    /// normalization affines.
    pub fn anchor_based(anchors_per_loc: usize, num_classes: usize) -> Self {
        HeadConfig {
            anchor_free: false,
            anchors_per_loc,
            num_classes,
            centerness: false,
            norm_affine: false,
        }
    }

    /// Per-location outputs with centerness and tower normalization
    /// affines, plus per-level regression scales.
    pub fn anchor_free(num_classes: usize) -> Self {
        HeadConfig {
            anchor_free: true,
            anchors_per_loc: 1,
            num_classes,
            centerness: true,
            norm_affine: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidArgument {
                op: "head_config",
                detail: String::from("num_classes must be positive"),
            });
        }
        if self.anchors_per_loc == 0 {
            return Err(Error::InvalidArgument {
                op: "head_config",
                detail: String::from("anchors_per_loc must be positive"),
            });
        }
        if self.anchor_free && self.anchors_per_loc != 1 {
            return Err(Error::InvalidArgument {
                op: "head_config",
                detail: String::from("anchor-free heads have one location per anchor slot"),
            });
        }
        if self.centerness && !self.anchor_free {
            return Err(Error::InvalidArgument {
                op: "head_config",
                detail: String::from("centerness is an anchor-free output"),
            });
        }
        Ok(())
    }

    /// Classification output channels: `A * K`, or `K` when anchor-free.
    pub fn cls_channels(&self) -> usize {
        self.anchors_per_loc * self.num_classes
    }

    /// Regression output channels: `4 * A`, or 4 when anchor-free.
    pub fn reg_channels(&self) -> usize {
        4 * self.anchors_per_loc
    }
}

/// One tower stage: a 3x3 convolution, optionally followed by a channel
/// affine (the trainable half of a normalization layer), then a ReLU.
#[derive(Debug, Clone)]
pub struct TowerLayer {
    pub conv: ConvParams,
    pub affine: Option<AffinePair>,
}

/// Per-channel scale and shift, initialized to the identity.
#[derive(Debug, Clone)]
pub struct AffinePair {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl AffinePair {
    fn identity(channels: usize) -> Self {
        AffinePair {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
        }
    }
}

/// Maps produced by one head forward at one level.
#[derive(Debug, Clone, Copy)]
pub struct HeadMaps {
    pub cls: NodeId,
    pub reg: NodeId,
    pub centerness: Option<NodeId>,
}

/// The shared head assembly.
#[derive(Debug, Clone)]
pub struct HeadAssembly {
    pub scheme: HeadScheme,
    pub config: HeadConfig,
    pub cls_tower: Vec<TowerLayer>,
    pub reg_tower: Vec<TowerLayer>,
    pub cls_out: ConvParams,
    pub reg_out: ConvParams,
    pub centerness_out: Option<ConvParams>,
    /// Per-level regression gains (anchor-free profile), initialized to 1.
    pub scales: Option<[f64; 5]>,
}

impl HeadAssembly {
    /// Draw an assembly. Stream order: classification tower convs, then
    /// regression tower convs, then cls output, reg output and (anchor-free)
    /// the centerness output. Affines and scales start at identity and
    /// consume no randomness. The classification output bias starts at
    /// `-ln 99` so every class begins at probability 0.01.
    pub fn build(scheme: HeadScheme, config: HeadConfig, rng: &mut DetRng) -> Result<Self> {
        config.validate()?;
        let c = PYRAMID_CHANNELS;
        let tower = |rng: &mut DetRng| -> Result<Vec<TowerLayer>> {
            (0..TOWER_DEPTH)
                .map(|_| {
                    Ok(TowerLayer {
                        conv: init::conv(rng, c, c, 3, 1, 1)?,
                        affine: config.norm_affine.then(|| AffinePair::identity(c)),
                    })
                })
                .collect()
        };
        let cls_tower = tower(rng)?;
        let reg_tower = tower(rng)?;
        let cls_out = init::conv_with_bias(
            rng,
            config.cls_channels(),
            c,
            3,
            1,
            1,
            init::focal_class_bias(),
        )?;
        let reg_out = init::conv(rng, config.reg_channels(), c, 3, 1, 1)?;
        let centerness_out = if config.centerness {
            Some(init::conv(rng, 1, c, 3, 1, 1)?)
        } else {
            None
        };
        let scales = config.anchor_free.then_some([1.0; 5]);
        Ok(HeadAssembly {
            scheme,
            config,
            cls_tower,
            reg_tower,
            cls_out,
            reg_out,
            centerness_out,
            scales,
        })
    }

    /// Every trainable scalar in the assembly.
    pub fn param_count(&self) -> u64 {
        let tower = |t: &[TowerLayer]| -> u64 {
            t.iter()
                .map(|layer| {
                    let mut n = layer.conv.param_count() as u64;
                    if let Some(a) = &layer.affine {
                        n += (a.gamma.len() + a.beta.len()) as u64;
                    }
                    n
                })
                .sum()
        };
        let mut total = tower(&self.cls_tower) + tower(&self.reg_tower);
        total += self.cls_out.param_count() as u64;
        total += self.reg_out.param_count() as u64;
        if let Some(cn) = &self.centerness_out {
            total += cn.param_count() as u64;
        }
        if let Some(s) = &self.scales {
            total += s.len() as u64;
        }
        total
    }

    /// Run the heads on one pyramid level. `level_idx` indexes levels 3..7
    /// as 0..4 and selects the per-level regression gain when present.
    /// Parameters are registered as shared graph leaves, so forwarding
    /// several levels through one graph reuses the same nodes.
    pub fn forward(&self, g: &mut Graph, p: NodeId, level_idx: usize) -> Result<HeadMaps> {
        let shape = g.value(p)?.shape();
        if shape.channels != PYRAMID_CHANNELS {
            return Err(Error::ChannelMismatch {
                op: "head_forward",
                expected: PYRAMID_CHANNELS,
                got: shape.channels,
            });
        }
        if self.scales.is_some() && level_idx >= 5 {
            return Err(Error::InvalidArgument {
                op: "head_forward",
                detail: alloc::format!("level index {level_idx} outside 0..5"),
            });
        }
        let (cls_feat, reg_feat) = match self.scheme {
            HeadScheme::Parallel => (
                self.run_tower(g, &self.cls_tower, "head.cls_tower", p)?,
                self.run_tower(g, &self.reg_tower, "head.reg_tower", p)?,
            ),
            HeadScheme::ClsFirst => {
                let t = self.run_tower(g, &self.cls_tower, "head.cls_tower", p)?;
                let u = self.run_tower(g, &self.reg_tower, "head.reg_tower", t)?;
                (t, u)
            }
            HeadScheme::RegFirst => {
                let u = self.run_tower(g, &self.reg_tower, "head.reg_tower", p)?;
                let t = self.run_tower(g, &self.cls_tower, "head.cls_tower", u)?;
                (t, u)
            }
        };
        let cls = self.run_out(g, &self.cls_out, "head.cls_out", cls_feat)?;
        let mut reg = self.run_out(g, &self.reg_out, "head.reg_out", reg_feat)?;
        if let Some(scales) = &self.scales {
            let gain = g.shared_parameter(
                &Tensor::filled(Shape::new(1, 1, 1, 1), scales[level_idx]),
                &alloc::format!("head.scale{}", level_idx + 3),
            );
            reg = g.scale(reg, gain)?;
        }
        let centerness = match &self.centerness_out {
            Some(conv) => Some(self.run_out(g, conv, "head.centerness_out", cls_feat)?),
            None => None,
        };
        Ok(HeadMaps {
            cls,
            reg,
            centerness,
        })
    }

    fn run_tower(
        &self,
        g: &mut Graph,
        tower: &[TowerLayer],
        prefix: &str,
        mut x: NodeId,
    ) -> Result<NodeId> {
        for (i, layer) in tower.iter().enumerate() {
            let kernel = g.shared_parameter(
                &layer.conv.kernel,
                &alloc::format!("{prefix}.{i}.kernel"),
            );
            let bias = g.shared_parameter(
                &vector_tensor(&layer.conv.bias),
                &alloc::format!("{prefix}.{i}.bias"),
            );
            x = g.conv(x, kernel, bias, layer.conv.stride, layer.conv.padding)?;
            if let Some(affine) = &layer.affine {
                let gamma = g.shared_parameter(
                    &vector_tensor(&affine.gamma),
                    &alloc::format!("{prefix}.{i}.gamma"),
                );
                let beta = g.shared_parameter(
                    &vector_tensor(&affine.beta),
                    &alloc::format!("{prefix}.{i}.beta"),
                );
                x = g.channel_affine(x, gamma, beta)?;
            }
            x = g.relu(x)?;
        }
        Ok(x)
    }

    fn run_out(
        &self,
        g: &mut Graph,
        conv: &ConvParams,
        prefix: &str,
        x: NodeId,
    ) -> Result<NodeId> {
        let kernel = g.shared_parameter(&conv.kernel, &alloc::format!("{prefix}.kernel"));
        let bias = g.shared_parameter(
            &vector_tensor(&conv.bias),
            &alloc::format!("{prefix}.bias"),
        );
        g.conv(x, kernel, bias, conv.stride, conv.padding)
    }
}

/// Parameter count for a head configuration under a given scheme — equal
/// across schemes by construction, which callers assert rather than assume.
pub fn count_head_params(config: HeadConfig, scheme: HeadScheme) -> Result<u64> {
    let mut rng = DetRng::new(0);
    Ok(HeadAssembly::build(scheme, config, &mut rng)?.param_count())
}

fn vector_tensor(values: &[f64]) -> Tensor {
    Tensor::from_vec(Shape::new(1, values.len(), 1, 1), values.to_vec())
        .expect("vector length matches shape")
}
