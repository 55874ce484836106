//! Scale-attention feature pyramid: the attention block and the four
//! pyramid wiring schemes.
//!
//! A scale attention block builds one pyramid level from *all* scales: every
//! 256-channel source map is resized to the target level, the branches are
//! summed, pooled to a channel descriptor, squeezed through a small fully
//! connected bottleneck, expanded per branch, normalized with a softmax
//! across branches, and the branches are fused with the resulting
//! per-channel weights. Levels are generated top-down (7 first) because
//! each level below 7 also consumes the freshly fused level above it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::init;
use crate::ops::{ConvParams, LinearParams};
use crate::rng::DetRng;
use crate::{Error, Result, PYRAMID_CHANNELS, PYRAMID_LEVELS};

/// How the pyramid levels are wired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpnScheme {
    /// Plain top-down pyramid: 1x1 laterals, upsample-add, 3x3 post convs
    /// on levels 3-5; levels 6-7 pass through their sources.
    Baseline,
    /// Scale attention at every level, each followed by a 3x3 post conv.
    AttentionAll,
    /// Scale attention at every level with all post convs removed.
    AttentionAllLight,
    /// Scale attention on levels 3-5 (posts retained); levels 6-7 keep the
    /// baseline pass-through construction.
    AttentionLow,
}

impl FpnScheme {
    pub const ALL: [FpnScheme; 4] = [
        FpnScheme::Baseline,
        FpnScheme::AttentionAll,
        FpnScheme::AttentionAllLight,
        FpnScheme::AttentionLow,
    ];

    /// The configuration token naming this scheme.
    pub fn token(&self) -> &'static str {
        match self {
            FpnScheme::Baseline => "baseline",
            FpnScheme::AttentionAll => "als",
            FpnScheme::AttentionAllLight => "als-light",
            FpnScheme::AttentionLow => "lls",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.token() == token)
    }

    /// Levels carrying a scale attention block.
    pub fn attention_levels(&self) -> &'static [usize] {
        match self {
            FpnScheme::Baseline => &[],
            FpnScheme::AttentionAll | FpnScheme::AttentionAllLight => &[3, 4, 5, 6, 7],
            FpnScheme::AttentionLow => &[3, 4, 5],
        }
    }

    /// Levels carrying a 3x3 post-fusion convolution.
    pub fn post_conv_levels(&self) -> &'static [usize] {
        match self {
            FpnScheme::Baseline | FpnScheme::AttentionLow => &[3, 4, 5],
            FpnScheme::AttentionAll => &[3, 4, 5, 6, 7],
            FpnScheme::AttentionAllLight => &[],
        }
    }
}

impl core::fmt::Display for FpnScheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.token())
    }
}

/// Number of branches entering the attention block at a level: level 7 has
/// no higher neighbour, so it fuses only the five source maps; every other
/// level also receives the fused level above it.
pub fn branch_count(level: usize) -> usize {
    if level == 7 {
        5
    } else {
        6
    }
}

/// One scale attention block, owning its reduce and per-branch expand maps.
#[derive(Debug, Clone)]
pub struct ScaleAttentionBlock {
    pub level: usize,
    /// C -> d bottleneck.
    pub reduce: LinearParams,
    /// d -> C logit map per branch, in branch order.
    pub expands: Vec<LinearParams>,
}

impl ScaleAttentionBlock {
    /// Draw a block for `level` with bottleneck width `dim`. Stream order:
    /// reduce first, then expands in branch order.
    pub fn build(level: usize, dim: usize, rng: &mut DetRng) -> Result<Self> {
        if !PYRAMID_LEVELS.contains(&level) {
            return Err(Error::InvalidArgument {
                op: "scale_attention",
                detail: alloc::format!("level {level} outside 3..=7"),
            });
        }
        if dim == 0 {
            return Err(Error::InvalidArgument {
                op: "scale_attention",
                detail: String::from("bottleneck width must be positive"),
            });
        }
        let reduce = init::linear(rng, dim, PYRAMID_CHANNELS)?;
        let expands = (0..branch_count(level))
            .map(|_| init::linear(rng, PYRAMID_CHANNELS, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScaleAttentionBlock {
            level,
            reduce,
            expands,
        })
    }

    pub fn branch_count(&self) -> usize {
        self.expands.len()
    }

    pub fn dim(&self) -> usize {
        self.reduce.out_dim()
    }

    /// `(C*d + d) + n_branches * (d*C + C)` trainable scalars.
    pub fn param_count(&self) -> u64 {
        let mut total = self.reduce.param_count() as u64;
        for e in &self.expands {
            total += e.param_count() as u64;
        }
        total
    }

    /// Run the block on pre-gathered branches (all resized to this level).
    /// Returns the fused map and the `(B, n, C, 1)` attention weights.
    pub fn forward(
        &self,
        g: &mut Graph,
        branches: &[NodeId],
        relu_after_reduce: bool,
    ) -> Result<(NodeId, NodeId)> {
        if branches.len() != self.expands.len() {
            return Err(Error::LengthMismatch {
                op: "scale_attention",
                expected: self.expands.len(),
                got: branches.len(),
            });
        }
        // Aggregate: elementwise sum in branch order.
        let mut agg = branches[0];
        for &b in &branches[1..] {
            agg = g.add(agg, b)?;
        }
        let pooled = g.global_avg_pool(agg)?;
        let prefix = alloc::format!("sa{}", self.level);
        let rw = g.parameter(
            self.reduce.weight.clone(),
            alloc::format!("{prefix}.reduce.weight"),
        );
        let rb = g.parameter(
            vector_tensor(&self.reduce.bias),
            alloc::format!("{prefix}.reduce.bias"),
        );
        let mut squeezed = g.linear(pooled, rw, rb)?;
        if relu_after_reduce {
            squeezed = g.relu(squeezed)?;
        }
        let mut logits = Vec::with_capacity(self.expands.len());
        for (i, expand) in self.expands.iter().enumerate() {
            let ew = g.parameter(
                expand.weight.clone(),
                alloc::format!("{prefix}.expand{i}.weight"),
            );
            let eb = g.parameter(
                vector_tensor(&expand.bias),
                alloc::format!("{prefix}.expand{i}.bias"),
            );
            logits.push(g.linear(squeezed, ew, eb)?);
        }
        let weights = g.softmax_branches(&logits)?;
        let fused = g.fuse(branches, weights)?;
        Ok((fused, weights))
    }
}

fn vector_tensor(values: &[f64]) -> crate::tensor::Tensor {
    crate::tensor::Tensor::from_vec(
        crate::tensor::Shape::new(1, values.len(), 1, 1),
        values.to_vec(),
    )
    .expect("vector length matches shape")
}

/// The pyramid constructor: laterals, per-scheme attention blocks and post
/// convolutions.
#[derive(Debug, Clone)]
pub struct SaFpn {
    pub scheme: FpnScheme,
    /// 1x1 projections of C3, C4, C5 into the 256-channel pyramid width.
    pub laterals: [ConvParams; 3],
    /// `(level, conv)` pairs, ascending by level.
    pub posts: Vec<(usize, ConvParams)>,
    /// Attention blocks, ascending by level.
    pub blocks: Vec<ScaleAttentionBlock>,
    pub attention_relu: bool,
}

/// Result of one pyramid forward.
#[derive(Debug, Clone)]
pub struct FpnForward {
    /// P3..P7 nodes in level order.
    pub levels: [NodeId; 5],
    /// `(level, weights node)` for every attention block, ascending.
    pub attention: Vec<(usize, NodeId)>,
    /// Levels in the order they were generated (always top-down).
    pub order: Vec<usize>,
}

impl SaFpn {
    /// Draw all pyramid weights. Stream order: laterals (C3, C4, C5), then
    /// post convs ascending by level, then attention blocks ascending by
    /// level.
    pub fn build(
        scheme: FpnScheme,
        level_channels: [usize; 3],
        attention_dim: usize,
        attention_relu: bool,
        rng: &mut DetRng,
    ) -> Result<Self> {
        let c = PYRAMID_CHANNELS;
        let laterals = [
            init::conv(rng, c, level_channels[0], 1, 1, 0)?,
            init::conv(rng, c, level_channels[1], 1, 1, 0)?,
            init::conv(rng, c, level_channels[2], 1, 1, 0)?,
        ];
        let posts = scheme
            .post_conv_levels()
            .iter()
            .map(|&level| Ok((level, init::conv(rng, c, c, 3, 1, 1)?)))
            .collect::<Result<Vec<_>>>()?;
        let blocks = scheme
            .attention_levels()
            .iter()
            .map(|&level| ScaleAttentionBlock::build(level, attention_dim, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(SaFpn {
            scheme,
            laterals,
            posts,
            blocks,
            attention_relu,
        })
    }

    pub fn block_at(&self, level: usize) -> Option<&ScaleAttentionBlock> {
        self.blocks.iter().find(|b| b.level == level)
    }

    /// Apply one lateral 1x1 projection (`source_idx` 0..3 for C3..C5).
    /// The weights register as shared leaves, so a caller that also needs
    /// the projection — e.g. to derive the extra levels from it — reuses
    /// the same parameters instead of duplicating them.
    pub fn project(&self, g: &mut Graph, source_idx: usize, c: NodeId) -> Result<NodeId> {
        let lat = &self.laterals[source_idx];
        let kernel = g.shared_parameter(
            &lat.kernel,
            &alloc::format!("fpn.lateral{}.kernel", source_idx + 3),
        );
        let bias = g.shared_parameter(
            &vector_tensor(&lat.bias),
            &alloc::format!("fpn.lateral{}.bias", source_idx + 3),
        );
        g.conv(c, kernel, bias, lat.stride, lat.padding)
    }

    fn post_at(&self, level: usize) -> Option<&ConvParams> {
        self.posts
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, conv)| conv)
    }

    /// Parameters in the laterals, posts and attention blocks.
    pub fn param_count(&self) -> u64 {
        let mut total = 0u64;
        for l in &self.laterals {
            total += l.param_count() as u64;
        }
        for (_, p) in &self.posts {
            total += p.param_count() as u64;
        }
        for b in &self.blocks {
            total += b.param_count();
        }
        total
    }

    /// Run the pyramid. `c` holds the C3..C7 source nodes in level order;
    /// C6 and C7 must already carry 256 channels.
    ///
    /// Attention levels hand their finished output (post conv included, when
    /// present) to the level below. The baseline construction instead
    /// threads the pre-post lateral sums down the chain, exactly as in the
    /// original top-down pyramid, with the chain rooted at level 5 — the
    /// pass-through levels 6 and 7 sit outside it.
    pub fn forward(&self, g: &mut Graph, c: [NodeId; 5]) -> Result<FpnForward> {
        // Project C3..C5 to the pyramid width once; C6/C7 pass straight in.
        let mut projected = c;
        for i in 0..3 {
            projected[i] = self.project(g, i, c[i])?;
        }
        self.forward_projected(g, projected)
    }

    /// [`SaFpn::forward`] with the laterals already applied — for callers
    /// that need the projections themselves (e.g. to source the extra
    /// levels) and hand them in instead of having them recomputed. All five
    /// nodes must carry the pyramid width.
    pub fn forward_projected(&self, g: &mut Graph, projected: [NodeId; 5]) -> Result<FpnForward> {
        for &node in projected.iter() {
            let got = g.value(node)?.shape().channels;
            if got != PYRAMID_CHANNELS {
                return Err(Error::ChannelMismatch {
                    op: "fpn_forward",
                    expected: PYRAMID_CHANNELS,
                    got,
                });
            }
        }
        let mut outputs: [Option<NodeId>; 5] = [None; 5];
        // Pre-post sums threaded by the baseline top-down chain.
        let mut chain: [Option<NodeId>; 5] = [None; 5];
        let mut attention = Vec::new();
        let mut order = Vec::with_capacity(5);

        for idx in (0..5).rev() {
            let level = PYRAMID_LEVELS[idx];
            order.push(level);
            if let Some(block) = self.block_at(level) {
                let prev = if level == 7 {
                    None
                } else {
                    Some(outputs[idx + 1].expect("top-down order fills the level above"))
                };
                let branches = self.gather(g, &projected, prev, idx)?;
                let (fused, weights) = block.forward(g, &branches, self.attention_relu)?;
                attention.push((level, weights));
                outputs[idx] = Some(self.apply_post(g, level, fused)?);
            } else {
                let pre = if level >= 6 {
                    // Pass-through from the pyramid source.
                    projected[idx]
                } else if level == 5 {
                    // Root of the baseline top-down chain.
                    projected[idx]
                } else {
                    let above = chain[idx + 1].expect("top-down order fills the chain");
                    let target = g.value(projected[idx])?.shape();
                    let up = g.resize(above, target.height, target.width)?;
                    g.add(projected[idx], up)?
                };
                chain[idx] = Some(pre);
                outputs[idx] = Some(self.apply_post(g, level, pre)?);
            }
        }
        attention.reverse(); // ascending by level
        let levels = [
            outputs[0].expect("level 3 generated"),
            outputs[1].expect("level 4 generated"),
            outputs[2].expect("level 5 generated"),
            outputs[3].expect("level 6 generated"),
            outputs[4].expect("level 7 generated"),
        ];
        Ok(FpnForward {
            levels,
            attention,
            order,
        })
    }

    fn apply_post(&self, g: &mut Graph, level: usize, x: NodeId) -> Result<NodeId> {
        match self.post_at(level) {
            Some(post) => {
                let kernel = g.parameter(
                    post.kernel.clone(),
                    alloc::format!("fpn.post{level}.kernel"),
                );
                let bias = g.parameter(
                    vector_tensor(&post.bias),
                    alloc::format!("fpn.post{level}.bias"),
                );
                g.conv(x, kernel, bias, post.stride, post.padding)
            }
            None => Ok(x),
        }
    }

    /// Branches for one attention level: every projected source resized to
    /// the target extent, plus the fused upper level when present. Order is
    /// fixed: (C3, C4, C5, C6, C7, upper).
    fn gather(
        &self,
        g: &mut Graph,
        projected: &[NodeId; 5],
        prev: Option<NodeId>,
        target_idx: usize,
    ) -> Result<Vec<NodeId>> {
        let target = g.value(projected[target_idx])?.shape();
        let mut branches = Vec::with_capacity(6);
        for &src in projected.iter() {
            branches.push(g.resize(src, target.height, target.width)?);
        }
        if let Some(prev) = prev {
            branches.push(g.resize(prev, target.height, target.width)?);
        }
        Ok(branches)
    }
}
