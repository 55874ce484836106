//! Named, self-describing verification checks.
//!
//! Each function returns [`CheckOutcome`]s that carry what was claimed,
//! what was measured, and whether the claim held. The CLI `verify` command
//! prints them as a matrix; the acceptance test suite asserts them one by
//! one. Keeping the logic here means both consumers run *the same*
//! assertions with the same tolerances.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::flops::count_flops;
use crate::analysis::gradcheck::{check_graph, GradCheckConfig, GradCheckReport, GroupResult};
use crate::analysis::params::{count_params, walk_param_arrays};
use crate::graph::{Graph, NodeId};
use crate::heads::{count_head_params, HeadAssembly, HeadConfig, HeadScheme};
use crate::init;
use crate::model::{DetectionModel, ModelConfig};
use crate::ops::{ConvParams, LinearParams};
use crate::pyramid::{level_shapes, BackboneProfile};
use crate::rng::{DetRng, Distribution};
use crate::safpn::{branch_count, FpnScheme, SaFpn, ScaleAttentionBlock};
use crate::tensor::{Shape, Tensor};
use crate::{Result, PYRAMID_CHANNELS, PYRAMID_LEVELS};

/// One executed check.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CheckOutcome {
    pub id: &'static str,
    pub module: &'static str,
    pub claim: &'static str,
    pub measured: String,
    /// Headline number behind `measured`, where one exists (for gradient
    /// checks, the worst relative error).
    pub metric: Option<f64>,
    pub pass: bool,
}

impl CheckOutcome {
    fn new(
        id: &'static str,
        module: &'static str,
        claim: &'static str,
        measured: String,
        pass: bool,
    ) -> Self {
        CheckOutcome {
            id,
            module,
            claim,
            measured,
            metric: None,
            pass,
        }
    }
}

fn build(profile: BackboneProfile, fpn: FpnScheme, head: HeadConfig) -> DetectionModel {
    DetectionModel::build(ModelConfig {
        profile,
        fpn_scheme: fpn,
        head,
        ..ModelConfig::default()
    })
    .expect("reference configs always build")
}

/// Whole-model parameter totals, the exact attention-cost identity, the
/// scheme-equality identity, and the size orderings.
pub fn counting_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    let anchor = HeadConfig::anchor_based(9, 80);
    let free = HeadConfig::anchor_free(80);
    let targets: [(&'static str, BackboneProfile, HeadConfig, u64); 4] = [
        ("params-anchor-r50", BackboneProfile::FaithfulR50, anchor, 37_700_000),
        ("params-free-r50", BackboneProfile::FaithfulR50, free, 32_000_000),
        ("params-anchor-r101", BackboneProfile::FaithfulR101, anchor, 56_600_000),
        ("params-free-r101", BackboneProfile::FaithfulR101, free, 51_000_000),
    ];
    let mut baselines = Vec::new();
    for (id, profile, head, target) in targets {
        let model = build(profile, FpnScheme::Baseline, head);
        let total = count_params(&model).total;
        baselines.push((profile, head, total));
        let deviation = total as f64 / target as f64 - 1.0;
        out.push(CheckOutcome::new(
            id,
            "analysis",
            "baseline total within 2% of the published size",
            format!(
                "total={total} target={target} deviation={:+.3}%",
                100.0 * deviation
            ),
            deviation.abs() <= 0.02,
        ));
    }

    // Attention-cost identity: the full attention scheme exceeds its light
    // variant by exactly the five 3x3 post convolutions it adds.
    let als = build(BackboneProfile::FaithfulR50, FpnScheme::AttentionAll, anchor);
    let light = build(
        BackboneProfile::FaithfulR50,
        FpnScheme::AttentionAllLight,
        anchor,
    );
    let delta = count_params(&als).total - count_params(&light).total;
    let expected: u64 = 5 * (3 * 3 * 256 * 256 + 256);
    out.push(CheckOutcome::new(
        "params-attention-delta",
        "analysis",
        "full minus light attention scheme equals five post convolutions exactly",
        format!("delta={delta} expected={expected}"),
        delta == expected,
    ));

    // Head counts must not depend on the wiring scheme.
    let mut equal = true;
    let mut counts_str = String::new();
    for config in [anchor, free] {
        let counts: Vec<u64> = HeadScheme::ALL
            .iter()
            .map(|&s| count_head_params(config, s).expect("valid config"))
            .collect();
        equal &= counts.iter().all(|&c| c == counts[0]);
        counts_str.push_str(&format!("{counts:?} "));
    }
    out.push(CheckOutcome::new(
        "params-head-schemes",
        "heads",
        "head parameter counts equal across parallel and sequential schemes",
        counts_str.trim_end().into(),
        equal,
    ));

    // Orderings: light < baseline < full on the r50 anchor-based model, and
    // the light scheme shrinks every baseline variant.
    let als_total = count_params(&als).total;
    let light_total = count_params(&light).total;
    let base_total = baselines[0].2;
    let mut ordering_ok = light_total < base_total && base_total < als_total;
    let mut reductions = String::new();
    for &(profile, head, base) in &baselines {
        let light_variant =
            count_params(&build(profile, FpnScheme::AttentionAllLight, head)).total;
        ordering_ok &= light_variant < base;
        reductions.push_str(&format!("{light_variant}<{base} "));
    }
    out.push(CheckOutcome::new(
        "params-ordering",
        "analysis",
        "light < baseline < full attention, and light shrinks every variant",
        format!(
            "light={light_total} baseline={base_total} full={als_total}; {}",
            reductions.trim_end()
        ),
        ordering_ok,
    ));

    // Cross-route agreement: component sums vs a brute-force array walk.
    let mut agree = true;
    for scheme in FpnScheme::ALL {
        let model = build(BackboneProfile::Tiny, scheme, free);
        agree &= count_params(&model).total == walk_param_arrays(&model);
    }
    out.push(CheckOutcome::new(
        "params-dual-walk",
        "analysis",
        "component counting agrees with a brute-force array walk",
        format!("schemes checked: {}", FpnScheme::ALL.len()),
        agree,
    ));

    out
}

/// FLOP parity across head schemes at several input shapes.
pub fn flop_checks() -> Vec<CheckOutcome> {
    let shapes = [(64usize, 80usize), (96, 96), (130, 70)];
    let mut pass = true;
    let mut measured = String::new();
    for &(h, w) in &shapes {
        let totals: Vec<u64> = HeadScheme::ALL
            .iter()
            .map(|&s| {
                let model = DetectionModel::build(ModelConfig {
                    profile: BackboneProfile::Tiny,
                    head_scheme: s,
                    ..ModelConfig::default()
                })
                .expect("tiny config builds");
                count_flops(&model, h, w).expect("valid shape").total_macs
            })
            .collect();
        pass &= totals.iter().all(|&t| t == totals[0]);
        measured.push_str(&format!("{h}x{w}:{:?} ", totals));
    }
    vec![CheckOutcome::new(
        "flops-head-parity",
        "analysis",
        "forward cost identical for all head schemes at every tested shape",
        measured.trim_end().into(),
        pass,
    )]
}

/// Random pyramid sources shaped like a tiny-profile backbone at 64x80.
fn tiny_sources(g: &mut Graph, seed: u64, probe: bool) -> [NodeId; 5] {
    let mut rng = DetRng::new(seed);
    let shapes = level_shapes(64, 80);
    let channels = [8usize, 16, 32, PYRAMID_CHANNELS, PYRAMID_CHANNELS];
    let mut nodes = [NodeId::default(); 5];
    for i in 0..5 {
        let t = rng
            .tensor(
                Distribution::Uniform { lo: -1.0, hi: 1.0 },
                Shape::new(1, channels[i], shapes[i].0, shapes[i].1),
            )
            .expect("valid distribution");
        nodes[i] = if probe {
            g.probe_input(t, format!("source.c{}", i + 3))
        } else {
            g.input(t)
        };
    }
    nodes
}

fn tiny_fpn(scheme: FpnScheme, seed: u64) -> SaFpn {
    let mut rng = DetRng::new(seed);
    SaFpn::build(scheme, [8, 16, 32], 32, true, &mut rng).expect("valid scheme")
}

/// Attention normalization, fixed points, zero-init behavior, saturation,
/// and pooled-descriptor symmetry.
pub fn attention_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    // Simplex: per (batch, channel), branch weights sum to one.
    let fpn = tiny_fpn(FpnScheme::AttentionAll, 21);
    let mut g = Graph::new();
    let sources = tiny_sources(&mut g, 22, false);
    let fwd = fpn.forward(&mut g, sources).expect("forward succeeds");
    let mut worst = 0.0f64;
    for &(_, weights) in &fwd.attention {
        let w = g.value(weights).expect("weights live");
        let shape = w.shape();
        for b in 0..shape.batch {
            for c in 0..shape.height {
                let mut sum = 0.0;
                for n in 0..shape.channels {
                    sum += w.get(b, n, c, 0);
                }
                worst = worst.max((sum - 1.0).abs());
            }
        }
    }
    out.push(CheckOutcome::new(
        "attention-simplex",
        "sa-fpn",
        "branch weights sum to 1 per channel within 1e-12",
        format!("max |sum-1| = {worst:.3e}"),
        worst <= 1e-12,
    ));

    // Identical branches: fusion returns the branch bit for bit, whatever
    // the attention weights say.
    let mut rng = DetRng::new(23);
    let block = ScaleAttentionBlock::build(5, 32, &mut rng).expect("valid level");
    let branch = rng
        .tensor(
            Distribution::Uniform { lo: -2.0, hi: 2.0 },
            Shape::new(1, PYRAMID_CHANNELS, 2, 3),
        )
        .expect("valid distribution");
    let mut g = Graph::new();
    let ids: Vec<NodeId> = (0..6).map(|_| g.input(branch.clone())).collect();
    let (fused, _) = block
        .forward(&mut g, &ids, true)
        .expect("forward succeeds");
    let exact = g.value(fused).expect("fused live") == &branch;
    out.push(CheckOutcome::new(
        "attention-fixed-point",
        "sa-fpn",
        "identical branches fuse to themselves exactly",
        format!("bitwise equal: {exact}"),
        exact,
    ));

    // Zero fc weights: every branch weight is exactly 1/N and the fusion is
    // the branch mean to floating-point accumulation accuracy.
    let mut rng = DetRng::new(24);
    let mut block = ScaleAttentionBlock::build(5, 32, &mut rng).expect("valid level");
    block.reduce.weight = Tensor::zeros(block.reduce.weight.shape());
    for expand in &mut block.expands {
        expand.weight = Tensor::zeros(expand.weight.shape());
    }
    let mut g = Graph::new();
    let branches: Vec<Tensor> = (0..6)
        .map(|_| {
            rng.tensor(
                Distribution::Uniform { lo: -1.0, hi: 1.0 },
                Shape::new(1, PYRAMID_CHANNELS, 2, 3),
            )
            .expect("valid distribution")
        })
        .collect();
    let ids: Vec<NodeId> = branches.iter().map(|t| g.input(t.clone())).collect();
    let (fused, weights) = block
        .forward(&mut g, &ids, true)
        .expect("forward succeeds");
    let w = g.value(weights).expect("weights live");
    let uniform = 1.0 / 6.0;
    let weights_exact = w.data().iter().all(|&v| v == uniform);
    let fused_value = g.value(fused).expect("fused live");
    let mut mean_dev = 0.0f64;
    let shape = fused_value.shape();
    for c in 0..shape.channels {
        for y in 0..shape.height {
            for x in 0..shape.width {
                let mean: f64 =
                    branches.iter().map(|b| b.get(0, c, y, x)).sum::<f64>() / 6.0;
                mean_dev = mean_dev.max((fused_value.get(0, c, y, x) - mean).abs());
            }
        }
    }
    out.push(CheckOutcome::new(
        "attention-zero-init",
        "sa-fpn",
        "zero-initialized mappings give exactly uniform weights and mean fusion",
        format!("weights==1/6: {weights_exact}, |fused-mean| <= {mean_dev:.3e}"),
        weights_exact && mean_dev <= 1e-12,
    ));

    // Saturation: a 40-logit margin drives the softmax to one-hot and the
    // fusion to the dominant branch within 1e-9.
    let mut rng = DetRng::new(25);
    let n = 6usize;
    let channels = 8usize;
    let mut g = Graph::new();
    let winner = |c: usize| c % n;
    let mut logit_ids = Vec::new();
    for b in 0..n {
        let mut t = Tensor::zeros(Shape::new(1, channels, 1, 1));
        for c in 0..channels {
            let v = if winner(c) == b { 20.0 } else { -20.0 };
            t.set(0, c, 0, 0, v);
        }
        logit_ids.push(g.input(t));
    }
    let branches: Vec<Tensor> = (0..n)
        .map(|_| {
            rng.tensor(
                Distribution::Uniform { lo: -1.0, hi: 1.0 },
                Shape::new(1, channels, 2, 2),
            )
            .expect("valid distribution")
        })
        .collect();
    let branch_ids: Vec<NodeId> = branches.iter().map(|t| g.input(t.clone())).collect();
    let weights = g
        .softmax_branches(&logit_ids)
        .expect("branch shapes agree");
    let fused = g.fuse(&branch_ids, weights).expect("fusable");
    let w = g.value(weights).expect("weights live");
    let mut min_top = 1.0f64;
    for c in 0..channels {
        min_top = min_top.min(w.get(0, winner(c), c, 0));
    }
    let fused_value = g.value(fused).expect("fused live");
    let mut sat_dev = 0.0f64;
    for c in 0..channels {
        for y in 0..2 {
            for x in 0..2 {
                let dominant = branches[winner(c)].get(0, c, y, x);
                sat_dev = sat_dev.max((fused_value.get(0, c, y, x) - dominant).abs());
            }
        }
    }
    out.push(CheckOutcome::new(
        "attention-saturation",
        "sa-fpn",
        "a 40-logit margin selects the dominant branch within 1e-9",
        format!("min top weight={min_top:.12}, |fused-dominant| <= {sat_dev:.3e}"),
        min_top >= 1.0 - 1e-9 && sat_dev <= 1e-9,
    ));

    // The pooled descriptor ignores branch order: it sees only the sum.
    let mut rng = DetRng::new(26);
    let branches: Vec<Tensor> = (0..6)
        .map(|_| {
            rng.tensor(
                Distribution::Uniform { lo: -1.0, hi: 1.0 },
                Shape::new(1, PYRAMID_CHANNELS, 3, 4),
            )
            .expect("valid distribution")
        })
        .collect();
    let descriptor = |order: &[usize]| -> Tensor {
        let mut g = Graph::new();
        let mut acc = g.input(branches[order[0]].clone());
        for &i in &order[1..] {
            let next = g.input(branches[i].clone());
            acc = g.add(acc, next).expect("same shapes");
        }
        let pooled = g.global_avg_pool(acc).expect("non-empty");
        g.value(pooled).expect("pooled live").clone()
    };
    let v_fwd = descriptor(&[0, 1, 2, 3, 4, 5]);
    let v_perm = descriptor(&[4, 0, 5, 2, 1, 3]);
    let mut perm_dev = 0.0f64;
    for (a, b) in v_fwd.data().iter().zip(v_perm.data()) {
        perm_dev = perm_dev.max((a - b).abs());
    }
    out.push(CheckOutcome::new(
        "attention-permutation",
        "sa-fpn",
        "the pooled descriptor is invariant to branch order within 1e-12",
        format!("max deviation = {perm_dev:.3e}"),
        perm_dev <= 1e-12,
    ));

    out
}

/// Branch casework, generation order and flow direction, channel contract,
/// and the initialization rules.
pub fn structural_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    // Branch casework: the top level has no upper neighbor, so five
    // branches; all other levels see six.
    let fpn = tiny_fpn(FpnScheme::AttentionAll, 31);
    let mut casework = branch_count(7) == 5;
    let mut counts = String::new();
    for level in PYRAMID_LEVELS {
        let expected = if level == 7 { 5 } else { 6 };
        casework &= branch_count(level) == expected;
        let block = fpn.block_at(level).expect("full scheme has every level");
        casework &= block.expands.len() == expected;
        counts.push_str(&format!("L{level}:{} ", block.expands.len()));
    }
    let mut g = Graph::new();
    let sources = tiny_sources(&mut g, 32, false);
    let fwd = fpn.forward(&mut g, sources).expect("forward succeeds");
    for &(level, weights) in &fwd.attention {
        let n = g.value(weights).expect("weights live").shape().channels;
        casework &= n == if level == 7 { 5 } else { 6 };
    }
    out.push(CheckOutcome::new(
        "structure-branch-count",
        "sa-fpn",
        "five branches at the top level, six elsewhere",
        counts.trim_end().into(),
        casework,
    ));

    // Generation order is strictly top-down, and information flows downward:
    // in an attention scheme a change at the coarsest source reaches the
    // finest output, while the baseline's pass-through levels stay outside
    // the chain.
    let mut order_ok = true;
    for scheme in FpnScheme::ALL {
        let fpn = tiny_fpn(scheme, 33);
        let mut g = Graph::new();
        let sources = tiny_sources(&mut g, 34, false);
        let fwd = fpn.forward(&mut g, sources).expect("forward succeeds");
        order_ok &= fwd.order == [7, 6, 5, 4, 3];
    }
    let flow = |scheme: FpnScheme, bump_idx: usize| -> Result<bool> {
        let fpn = tiny_fpn(scheme, 35);
        let mut g = Graph::new();
        let sources = tiny_sources(&mut g, 36, false);
        let fwd = fpn.forward(&mut g, sources)?;
        let before = g.value(fwd.levels[0])?.clone();
        for v in g.leaf_value_mut(sources[bump_idx])?.data_mut() {
            *v += 1.0;
        }
        g.recompute()?;
        Ok(g.value(fwd.levels[0])? != &before)
    };
    let attention_flows = flow(FpnScheme::AttentionAllLight, 4).unwrap_or(false);
    let baseline_chain = flow(FpnScheme::Baseline, 2).unwrap_or(false);
    let baseline_isolated = !flow(FpnScheme::Baseline, 4).unwrap_or(true);
    out.push(CheckOutcome::new(
        "structure-topdown-order",
        "sa-fpn",
        "levels generate coarsest-first and upper levels feed lower ones",
        format!(
            "order=[7,6,5,4,3]:{order_ok} attention C7->P3:{attention_flows} \
             baseline C5->P3:{baseline_chain} baseline C7-/->P3:{baseline_isolated}"
        ),
        order_ok && attention_flows && baseline_chain && baseline_isolated,
    ));

    // Channel contract: every output level carries the pyramid width.
    let mut channels_ok = true;
    for scheme in FpnScheme::ALL {
        let fpn = tiny_fpn(scheme, 37);
        let mut g = Graph::new();
        let sources = tiny_sources(&mut g, 38, false);
        let fwd = fpn.forward(&mut g, sources).expect("forward succeeds");
        for &level in &fwd.levels {
            channels_ok &=
                g.value(level).expect("level live").shape().channels == PYRAMID_CHANNELS;
        }
    }
    out.push(CheckOutcome::new(
        "structure-channels",
        "sa-fpn",
        "every pyramid level carries 256 channels in every scheme",
        format!("schemes checked: {}", FpnScheme::ALL.len()),
        channels_ok,
    ));

    // Init rules: gaussian weights with std 0.01, zero biases everywhere,
    // the classification prior bias, identity affines, unit gains.
    let model = DetectionModel::build(ModelConfig {
        profile: BackboneProfile::Tiny,
        fpn_scheme: FpnScheme::AttentionAll,
        head: HeadConfig::anchor_free(80),
        ..ModelConfig::default()
    })
    .expect("tiny config builds");
    let kernel = &model.heads.cls_tower[0].conv.kernel;
    let n = kernel.data().len() as f64;
    let mean: f64 = kernel.data().iter().sum::<f64>() / n;
    let var: f64 = kernel.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    let std_ok = (std - init::WEIGHT_STD).abs() < 2e-4 && mean.abs() < 2e-4;
    let zero_biases = model
        .fpn
        .blocks
        .iter()
        .all(|b| {
            b.reduce.bias.iter().all(|&v| v == 0.0)
                && b.expands.iter().all(|e| e.bias.iter().all(|&v| v == 0.0))
        })
        && model.heads.reg_out.bias.iter().all(|&v| v == 0.0)
        && model
            .heads
            .cls_tower
            .iter()
            .chain(model.heads.reg_tower.iter())
            .all(|l| l.conv.bias.iter().all(|&v| v == 0.0));
    let prior = init::focal_class_bias();
    let cls_bias_ok = model.heads.cls_out.bias.iter().all(|&b| b == prior);
    let affine_identity = model
        .heads
        .cls_tower
        .iter()
        .filter_map(|l| l.affine.as_ref())
        .all(|a| a.gamma.iter().all(|&v| v == 1.0) && a.beta.iter().all(|&v| v == 0.0));
    let scales_ok = model.heads.scales == Some([1.0; 5]);
    out.push(CheckOutcome::new(
        "structure-init",
        "model",
        "gaussian(0, 0.01) weights, zero biases, -ln(99) classification prior",
        format!(
            "sample std={std:.5} zero biases:{zero_biases} prior bias:{cls_bias_ok} \
             identity affines:{affine_identity} unit gains:{scales_ok}"
        ),
        std_ok && zero_biases && cls_bias_ok && affine_identity && scales_ok,
    ));

    out
}

fn uniform_tensor(rng: &mut DetRng, shape: Shape, lo: f64, hi: f64) -> Tensor {
    rng.tensor(Distribution::Uniform { lo, hi }, shape)
        .expect("valid distribution")
}

fn outcome_from_report(
    id: &'static str,
    module: &'static str,
    claim: &'static str,
    report: &GradCheckReport,
) -> CheckOutcome {
    let mut measured = format!(
        "max rel err {:.3e} over {} groups",
        report.max_rel_err(),
        report.groups.len()
    );
    if let Some(worst) = report.failed().next() {
        measured.push_str(&format!(" (first failure: {})", worst.name));
    }
    let mut outcome = CheckOutcome::new(id, module, claim, measured, report.pass());
    outcome.metric = Some(report.max_rel_err());
    outcome
}

/// Re-draw convolution weights at a variance-preserving scale. The finite
/// difference check probes a *generic* point of the same kernels the model
/// uses; at the production init scale (std 0.01) a four-conv tower
/// attenuates signals so far that difference quotients drown in rounding,
/// so the checked instance uses std sqrt(2/fan_in) instead.
fn redraw_conv(rng: &mut DetRng, conv: &mut ConvParams) {
    let shape = conv.kernel.shape();
    let fan_in = shape.channels * shape.height * shape.width;
    let std = libm::sqrt(2.0 / fan_in as f64);
    conv.kernel = rng
        .tensor(Distribution::Gaussian { mean: 0.0, std }, shape)
        .expect("valid distribution");
}

fn redraw_linear(rng: &mut DetRng, linear: &mut LinearParams, std: f64) {
    let shape = linear.weight.shape();
    linear.weight = rng
        .tensor(Distribution::Gaussian { mean: 0.0, std }, shape)
        .expect("valid distribution");
}

/// Gradient checks: one graph per kernel, then the composed attention
/// subgraph and the sequential head graph.
pub fn gradient_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let cfg = GradCheckConfig::default();
    let module = "ops";

    // conv2d, including a strided second stage fed by the first.
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(41);
        let x = uniform_tensor(&mut rng, Shape::new(1, 2, 5, 5), -1.0, 1.0);
        let k1 = uniform_tensor(&mut rng, Shape::new(3, 2, 3, 3), -0.5, 0.5);
        let b1 = uniform_tensor(&mut rng, Shape::new(1, 3, 1, 1), -0.5, 0.5);
        let k2 = uniform_tensor(&mut rng, Shape::new(2, 3, 3, 3), -0.5, 0.5);
        let b2 = uniform_tensor(&mut rng, Shape::new(1, 2, 1, 1), -0.5, 0.5);
        let xn = g.probe_input(x, "x");
        let k1n = g.parameter(k1, "k1");
        let b1n = g.parameter(b1, "b1");
        let y = g.conv(xn, k1n, b1n, 1, 1).expect("shapes agree");
        let k2n = g.parameter(k2, "k2");
        let b2n = g.parameter(b2, "b2");
        let z = g.conv(y, k2n, b2n, 2, 0).expect("shapes agree");
        let report = check_graph(&mut g, &[z], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-conv2d",
            module,
            "convolution gradients match central differences",
            &report,
        ));
    }

    // Bilinear resize, up then down.
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(42);
        let x = uniform_tensor(&mut rng, Shape::new(1, 3, 2, 3), -1.0, 1.0);
        let xn = g.probe_input(x, "x");
        let up = g.resize(xn, 5, 4).expect("valid target");
        let down = g.resize(up, 2, 2).expect("valid target");
        let report = check_graph(&mut g, &[down], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-resize",
            module,
            "bilinear resize gradients match central differences",
            &report,
        ));
    }

    // ReLU.
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(43);
        let x = uniform_tensor(&mut rng, Shape::new(1, 2, 4, 4), -1.0, 1.0);
        let xn = g.probe_input(x, "x");
        let y = g.relu(xn).expect("valid node");
        let report = check_graph(&mut g, &[y], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-relu",
            module,
            "rectifier gradients match central differences",
            &report,
        ));
    }

    // Add with fan-out (one operand used twice).
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(44);
        let a = uniform_tensor(&mut rng, Shape::new(1, 2, 3, 3), -1.0, 1.0);
        let b = uniform_tensor(&mut rng, Shape::new(1, 2, 3, 3), -1.0, 1.0);
        let an = g.probe_input(a, "a");
        let bn = g.probe_input(b, "b");
        let c = g.add(an, bn).expect("same shapes");
        let d = g.add(c, an).expect("same shapes");
        let report = check_graph(&mut g, &[d], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-add",
            module,
            "elementwise add gradients accumulate over fan-out",
            &report,
        ));
    }

    // Global average pool.
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(45);
        let x = uniform_tensor(&mut rng, Shape::new(2, 4, 3, 5), -1.0, 1.0);
        let xn = g.probe_input(x, "x");
        let y = g.global_avg_pool(xn).expect("non-empty");
        let report = check_graph(&mut g, &[y], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-pool",
            module,
            "global average pool gradients match central differences",
            &report,
        ));
    }

    // Fully connected map.
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(46);
        let x = uniform_tensor(&mut rng, Shape::new(2, 6, 1, 1), -1.0, 1.0);
        let w = uniform_tensor(&mut rng, Shape::new(4, 6, 1, 1), -0.5, 0.5);
        let b = uniform_tensor(&mut rng, Shape::new(1, 4, 1, 1), -0.5, 0.5);
        let xn = g.probe_input(x, "x");
        let wn = g.parameter(w, "w");
        let bn = g.parameter(b, "b");
        let y = g.linear(xn, wn, bn).expect("shapes agree");
        let report = check_graph(&mut g, &[y], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-linear",
            module,
            "fully connected gradients match central differences",
            &report,
        ));
    }

    // Branch softmax (4 branches, 8 channels).
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(47);
        let logits: Vec<NodeId> = (0..4)
            .map(|i| {
                let t = uniform_tensor(&mut rng, Shape::new(1, 8, 1, 1), -2.0, 2.0);
                g.probe_input(t, format!("logit{i}"))
            })
            .collect();
        let y = g.softmax_branches(&logits).expect("branch shapes agree");
        let report = check_graph(&mut g, &[y], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-softmax",
            module,
            "branch softmax gradients match central differences",
            &report,
        ));
    }

    // Weighted fusion driven by a live softmax.
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(48);
        let logits: Vec<NodeId> = (0..3)
            .map(|i| {
                let t = uniform_tensor(&mut rng, Shape::new(1, 4, 1, 1), -1.0, 1.0);
                g.probe_input(t, format!("logit{i}"))
            })
            .collect();
        let weights = g.softmax_branches(&logits).expect("branch shapes agree");
        let branches: Vec<NodeId> = (0..3)
            .map(|i| {
                let t = uniform_tensor(&mut rng, Shape::new(1, 4, 2, 2), -1.0, 1.0);
                g.probe_input(t, format!("branch{i}"))
            })
            .collect();
        let fused = g.fuse(&branches, weights).expect("fusable");
        let report = check_graph(&mut g, &[fused], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-fuse",
            module,
            "weighted fusion gradients match central differences",
            &report,
        ));
    }

    // Channel affine.
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(49);
        let x = uniform_tensor(&mut rng, Shape::new(1, 3, 2, 2), -1.0, 1.0);
        let gamma = uniform_tensor(&mut rng, Shape::new(1, 3, 1, 1), 0.5, 1.5);
        let beta = uniform_tensor(&mut rng, Shape::new(1, 3, 1, 1), -0.5, 0.5);
        let xn = g.probe_input(x, "x");
        let gn = g.parameter(gamma, "gamma");
        let bn = g.parameter(beta, "beta");
        let y = g.channel_affine(xn, gn, bn).expect("shapes agree");
        let report = check_graph(&mut g, &[y], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-affine",
            module,
            "channel affine gradients match central differences",
            &report,
        ));
    }

    // Scalar gain.
    {
        let mut g = Graph::new();
        let mut rng = DetRng::new(50);
        let x = uniform_tensor(&mut rng, Shape::new(1, 2, 2, 2), -1.0, 1.0);
        let f = uniform_tensor(&mut rng, Shape::new(1, 1, 1, 1), 0.5, 2.0);
        let xn = g.probe_input(x, "x");
        let fn_ = g.parameter(f, "factor");
        let y = g.scale(xn, fn_).expect("valid factor");
        let report = check_graph(&mut g, &[y], &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-scale",
            module,
            "scalar gain gradients match central differences",
            &report,
        ));
    }

    // Composed attention subgraph: sources through the light scheme to the
    // mid-level output.
    {
        let mut fpn = tiny_fpn(FpnScheme::AttentionAllLight, 51);
        let mut rng = DetRng::new(52);
        for lat in &mut fpn.laterals {
            redraw_conv(&mut rng, lat);
        }
        for block in &mut fpn.blocks {
            let fan = block.reduce.weight.shape().channels;
            redraw_linear(&mut rng, &mut block.reduce, libm::sqrt(2.0 / fan as f64));
            for expand in &mut block.expands {
                // A full variance-preserving draw here spreads the branch
                // logits so wide that the softmax saturates (losing branches
                // near 1e-4), collapsing their logit gradients to the
                // rounding floor of the difference quotient. A gentler scale
                // keeps every branch weight — and so every gradient — well
                // off that floor.
                redraw_linear(&mut rng, expand, 0.05);
            }
        }
        let mut g = Graph::new();
        let sources = tiny_sources(&mut g, 53, true);
        let fwd = fpn.forward(&mut g, sources).expect("forward succeeds");
        // The step size is matched to each leaf's path. Expansion weights
        // and biases reach the output through smooth maps only (linear,
        // softmax, fusion, resize), so a large step is safe and lifts the
        // difference quotient clear of f64 rounding on small-gradient
        // elements — an expansion weight multiplies exactly one pooled
        // activation, so a near-zero activation makes its whole column's
        // gradients tiny. Everything at or before the rectifier keeps the
        // default small step, where a kink crossing perturbs the quotient
        // only at O(epsilon).
        let fine_cfg = GradCheckConfig {
            samples_per_group: Some(8),
            seed: 54,
            ..GradCheckConfig::default()
        };
        let coarse_cfg = GradCheckConfig {
            epsilon: 1e-3,
            ..fine_cfg
        };
        let fine = check_graph(&mut g, &[fwd.levels[2]], &fine_cfg).expect("check runs");
        let coarse = check_graph(&mut g, &[fwd.levels[2]], &coarse_cfg).expect("check runs");
        let smooth_tail = |name: &str| name.contains(".expand");
        let mut groups: Vec<GroupResult> = Vec::new();
        groups.extend(fine.groups.into_iter().filter(|gr| !smooth_tail(&gr.name)));
        groups.extend(coarse.groups.into_iter().filter(|gr| smooth_tail(&gr.name)));
        let report = GradCheckReport {
            epsilon: fine_cfg.epsilon,
            tolerance: fine_cfg.tolerance,
            groups,
        };
        out.push(outcome_from_report(
            "grad-sa-subgraph",
            "sa-fpn",
            "the composed attention pyramid backpropagates correctly",
            &report,
        ));
    }

    // Composed sequential head graph (classification tower first), with
    // affines, centerness and the per-level gain in play.
    {
        let mut rng = DetRng::new(55);
        let mut heads =
            HeadAssembly::build(HeadScheme::ClsFirst, HeadConfig::anchor_free(4), &mut rng)
                .expect("valid config");
        let mut redraw_rng = DetRng::new(56);
        for layer in heads.cls_tower.iter_mut().chain(heads.reg_tower.iter_mut()) {
            redraw_conv(&mut redraw_rng, &mut layer.conv);
        }
        redraw_conv(&mut redraw_rng, &mut heads.cls_out);
        redraw_conv(&mut redraw_rng, &mut heads.reg_out);
        if let Some(cn) = heads.centerness_out.as_mut() {
            redraw_conv(&mut redraw_rng, cn);
        }
        let mut g = Graph::new();
        let mut rng = DetRng::new(57);
        let p = uniform_tensor(&mut rng, Shape::new(1, PYRAMID_CHANNELS, 2, 2), -1.0, 1.0);
        let pn = g.probe_input(p, "p");
        let maps = heads.forward(&mut g, pn, 0).expect("forward succeeds");
        let mut outputs = vec![maps.cls, maps.reg];
        if let Some(cn) = maps.centerness {
            outputs.push(cn);
        }
        // The towers are piecewise linear in every scalar, so the central
        // difference is exact between kinks and the only error sources are
        // f64 rounding (shrinks as the step grows) and kink crossings
        // (perturb the quotient at O(step)). The default step sits on the
        // plateau between the two.
        let cfg = GradCheckConfig {
            samples_per_group: Some(8),
            seed: 58,
            ..GradCheckConfig::default()
        };
        let report = check_graph(&mut g, &outputs, &cfg).expect("check runs");
        out.push(outcome_from_report(
            "grad-clsfirst-heads",
            "heads",
            "the composed sequential head graph backpropagates correctly",
            &report,
        ));
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_all_pass(outcomes: &[CheckOutcome]) {
        for outcome in outcomes {
            assert!(
                outcome.pass,
                "{} failed: {}",
                outcome.id, outcome.measured
            );
        }
    }

    #[test]
    fn counting_checks_pass() {
        let outcomes = counting_checks();
        assert_eq!(outcomes.len(), 8);
        assert_all_pass(&outcomes);
    }

    #[test]
    fn flop_checks_pass() {
        assert_all_pass(&flop_checks());
    }

    #[test]
    fn attention_checks_pass() {
        let outcomes = attention_checks();
        assert_eq!(outcomes.len(), 5);
        assert_all_pass(&outcomes);
    }

    #[test]
    fn structural_checks_pass() {
        let outcomes = structural_checks();
        assert_eq!(outcomes.len(), 4);
        assert_all_pass(&outcomes);
    }

    #[test]
    fn gradient_checks_pass() {
        let outcomes = gradient_checks();
        assert_eq!(outcomes.len(), 12);
        assert_all_pass(&outcomes);
    }
}
