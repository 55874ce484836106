//! Symbolic FLOP counting: a shape-only walk of the forward computation.
//!
//! No tensors are materialized; every cost comes from closed forms over the
//! shapes the model would produce. Conventions, fixed here and used
//! everywhere:
//!
//! * convolution: `k_h * k_w * in_c * out_c * out_h * out_w` MACs;
//! * fully connected map: `in_dim * out_dim` MACs per batch element;
//! * bilinear resize: 4 MACs per output element, 0 when the target equals
//!   the source size (that case is a copy);
//! * global average pool: one MAC-equivalent per input element;
//! * elementwise add, channel affine, scalar gain: one per output element;
//! * branch softmax: two per logit (exponential plus normalization);
//! * weighted fusion: one MAC per branch per output element;
//! * ReLU: free (comparisons are not counted).
//!
//! 1 MAC = 2 FLOPs; reports carry both numbers.

use alloc::string::String;
use alloc::vec::Vec;

use crate::model::DetectionModel;
use crate::pyramid::{halved, level_shapes};
use crate::safpn::branch_count;
use crate::{Result, PYRAMID_CHANNELS, PYRAMID_LEVELS};

/// One costed layer.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerCost {
    pub name: String,
    pub macs: u64,
}

/// Additive cost accumulator with the conventions above.
#[derive(Debug, Clone, Default)]
pub struct CostSheet {
    pub entries: Vec<LayerCost>,
}

impl CostSheet {
    pub fn new() -> Self {
        CostSheet::default()
    }

    fn push(&mut self, name: String, macs: u64) {
        self.entries.push(LayerCost { name, macs });
    }

    pub fn conv(
        &mut self,
        name: String,
        kernel: usize,
        in_c: usize,
        out_c: usize,
        out_h: usize,
        out_w: usize,
    ) {
        let macs = (kernel * kernel * in_c * out_c * out_h * out_w) as u64;
        self.push(name, macs);
    }

    pub fn linear(&mut self, name: String, in_dim: usize, out_dim: usize) {
        self.push(name, (in_dim * out_dim) as u64);
    }

    pub fn resize(
        &mut self,
        name: String,
        channels: usize,
        src: (usize, usize),
        dst: (usize, usize),
    ) {
        let macs = if src == dst {
            0
        } else {
            (4 * channels * dst.0 * dst.1) as u64
        };
        self.push(name, macs);
    }

    pub fn pool(&mut self, name: String, channels: usize, h: usize, w: usize) {
        self.push(name, (channels * h * w) as u64);
    }

    pub fn elementwise(&mut self, name: String, elements: usize) {
        self.push(name, elements as u64);
    }

    pub fn softmax(&mut self, name: String, logits: usize) {
        self.push(name, 2 * logits as u64);
    }

    pub fn fuse(&mut self, name: String, branches: usize, elements: usize) {
        self.push(name, (branches * elements) as u64);
    }

    pub fn total_macs(&self) -> u64 {
        self.entries.iter().map(|e| e.macs).sum()
    }
}

/// Whole-forward cost at one input size.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FlopReport {
    pub image_height: usize,
    pub image_width: usize,
    pub layers: Vec<LayerCost>,
    pub total_macs: u64,
    /// `2 * total_macs` under the 1 MAC = 2 FLOPs convention.
    pub total_flops: u64,
}

/// Walk the model's forward computation symbolically at the given image
/// size (batch 1). Mirrors the graph the model would build: backbone stub,
/// extra levels, pyramid, then the heads at every level.
pub fn count_flops(model: &DetectionModel, image_h: usize, image_w: usize) -> Result<FlopReport> {
    let mut sheet = CostSheet::new();
    let shapes = level_shapes(image_h, image_w);
    let src_channels = model.backbone.level_channels();

    // Backbone stub: stem + four stride-2 convs + the three projections.
    let stub_w = model.backbone.stem.out_channels();
    let mut h = halved(image_h);
    let mut w = halved(image_w);
    sheet.conv(String::from("backbone.stem"), 3, 3, stub_w, h, w);
    let mut tap_shapes = [(0usize, 0usize); 3];
    for i in 0..4 {
        h = halved(h);
        w = halved(w);
        sheet.conv(alloc::format!("backbone.down{}", i + 1), 3, stub_w, stub_w, h, w);
        if i >= 1 {
            tap_shapes[i - 1] = (h, w);
        }
    }
    for (i, &(th, tw)) in tap_shapes.iter().enumerate() {
        sheet.conv(
            alloc::format!("backbone.proj{}", i + 3),
            1,
            stub_w,
            src_channels[i],
            th,
            tw,
        );
    }

    // Extra levels: stride-2 convs above C5. When the extras read the C5
    // projection instead of the raw stage, the shared lateral is counted
    // once by the pyramid walk below; feeding its output to the extras
    // costs nothing further.
    let extras_in = model.extras.conv6.in_channels();
    sheet.conv(
        String::from("extras.conv6"),
        3,
        extras_in,
        PYRAMID_CHANNELS,
        shapes[3].0,
        shapes[3].1,
    );
    sheet.conv(
        String::from("extras.conv7"),
        3,
        PYRAMID_CHANNELS,
        PYRAMID_CHANNELS,
        shapes[4].0,
        shapes[4].1,
    );

    // Laterals project C3..C5 to the pyramid width.
    for i in 0..3 {
        sheet.conv(
            alloc::format!("fpn.lateral{}", i + 3),
            1,
            src_channels[i],
            PYRAMID_CHANNELS,
            shapes[i].0,
            shapes[i].1,
        );
    }

    let c = PYRAMID_CHANNELS;
    for idx in (0..5).rev() {
        let level = PYRAMID_LEVELS[idx];
        let (lh, lw) = shapes[idx];
        let elements = c * lh * lw;
        if model.fpn.block_at(level).is_some() {
            let branches = branch_count(level);
            for (b, &(sh, sw)) in shapes.iter().enumerate() {
                sheet.resize(
                    alloc::format!("sa{level}.branch{}.resize", b + 3),
                    c,
                    (sh, sw),
                    (lh, lw),
                );
            }
            if level < 7 {
                sheet.resize(
                    alloc::format!("sa{level}.upper.resize"),
                    c,
                    shapes[idx + 1],
                    (lh, lw),
                );
            }
            for _ in 1..branches {
                sheet.elementwise(alloc::format!("sa{level}.aggregate"), elements);
            }
            sheet.pool(alloc::format!("sa{level}.pool"), c, lh, lw);
            let d = model.config.attention_dim;
            sheet.linear(alloc::format!("sa{level}.reduce"), c, d);
            for b in 0..branches {
                sheet.linear(alloc::format!("sa{level}.expand{b}"), d, c);
            }
            sheet.softmax(alloc::format!("sa{level}.softmax"), branches * c);
            sheet.fuse(alloc::format!("sa{level}.fuse"), branches, elements);
        } else if level < 6 && level != 5 {
            // Baseline top-down merge below the chain root.
            sheet.resize(
                alloc::format!("fpn.up{}", level + 1),
                c,
                shapes[idx + 1],
                (lh, lw),
            );
            sheet.elementwise(alloc::format!("fpn.merge{level}"), elements);
        }
        if model.fpn.scheme.post_conv_levels().contains(&level) {
            sheet.conv(alloc::format!("fpn.post{level}"), 3, c, c, lh, lw);
        }
    }

    // Heads at every level, mirroring the scheme's wiring: the towers and
    // output convolutions visit the same shapes in every scheme, which is
    // exactly why the totals cannot depend on it.
    for (idx, &(lh, lw)) in shapes.iter().enumerate() {
        let level = PYRAMID_LEVELS[idx];
        for (tower, tag) in [
            (&model.heads.cls_tower, "cls_tower"),
            (&model.heads.reg_tower, "reg_tower"),
        ] {
            for (i, layer) in tower.iter().enumerate() {
                sheet.conv(
                    alloc::format!("head.{tag}.{i}@p{level}"),
                    3,
                    c,
                    c,
                    lh,
                    lw,
                );
                if layer.affine.is_some() {
                    sheet.elementwise(
                        alloc::format!("head.{tag}.{i}.affine@p{level}"),
                        c * lh * lw,
                    );
                }
            }
        }
        sheet.conv(
            alloc::format!("head.cls_out@p{level}"),
            3,
            c,
            model.config.head.cls_channels(),
            lh,
            lw,
        );
        sheet.conv(
            alloc::format!("head.reg_out@p{level}"),
            3,
            c,
            model.config.head.reg_channels(),
            lh,
            lw,
        );
        if model.heads.scales.is_some() {
            sheet.elementwise(
                alloc::format!("head.scale@p{level}"),
                model.config.head.reg_channels() * lh * lw,
            );
        }
        if model.heads.centerness_out.is_some() {
            sheet.conv(alloc::format!("head.centerness_out@p{level}"), 3, c, 1, lh, lw);
        }
    }

    let total_macs = sheet.total_macs();
    Ok(FlopReport {
        image_height: image_h,
        image_width: image_w,
        layers: sheet.entries,
        total_macs,
        total_flops: 2 * total_macs,
    })
}
