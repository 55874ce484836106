//! Parameter accounting.
//!
//! Two independent routes produce the same totals: [`count_params`] sums the
//! per-component closed-form counts the model components expose, while
//! [`walk_param_arrays`] walks every weight array actually stored in the
//! model and counts scalars one array at a time. Tests hold the two routes
//! to exact agreement.

use crate::model::DetectionModel;
use crate::ops::{ConvParams, LinearParams};

/// Component and whole-model parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ParamReport {
    pub trunk: u64,
    pub fpn: u64,
    pub heads: u64,
    pub total: u64,
}

impl ParamReport {
    /// Millions rounded to one decimal — the usual presentation unit for
    /// model sizes. Rounding happens here and nowhere else.
    pub fn millions(count: u64) -> f64 {
        libm::round(count as f64 / 100_000.0) / 10.0
    }

    pub fn total_millions(&self) -> f64 {
        Self::millions(self.total)
    }
}

/// Exact component walk of a constructed model.
pub fn count_params(model: &DetectionModel) -> ParamReport {
    let trunk = model.trunk_params();
    let fpn = model.fpn_params();
    let heads = model.head_params();
    ParamReport {
        trunk,
        fpn,
        heads,
        total: trunk + fpn + heads,
    }
}

/// Brute-force scalar count over every weight array stored in the model:
/// kernels and biases element by element, affine pairs, per-level gains.
/// Faithful profiles carry their trunk as a catalogued count rather than
/// arrays, so the trunk term is shared with [`count_params`]; everything
/// that exists as an array is re-counted here without consulting the
/// components' own `param_count` methods.
pub fn walk_param_arrays(model: &DetectionModel) -> u64 {
    let mut total = model.backbone.reported_trunk_params();

    let conv = |c: &ConvParams| c.kernel.data().len() as u64 + c.bias.len() as u64;
    let linear = |l: &LinearParams| l.weight.data().len() as u64 + l.bias.len() as u64;

    total += conv(&model.extras.conv6) + conv(&model.extras.conv7);
    for lat in &model.fpn.laterals {
        total += conv(lat);
    }
    for (_, post) in &model.fpn.posts {
        total += conv(post);
    }
    for block in &model.fpn.blocks {
        total += linear(&block.reduce);
        for expand in &block.expands {
            total += linear(expand);
        }
    }
    let tower: u64 = model
        .heads
        .cls_tower
        .iter()
        .chain(model.heads.reg_tower.iter())
        .map(|layer| {
            let mut n = conv(&layer.conv);
            if let Some(a) = &layer.affine {
                n += a.gamma.len() as u64 + a.beta.len() as u64;
            }
            n
        })
        .sum();
    total += tower;
    total += conv(&model.heads.cls_out) + conv(&model.heads.reg_out);
    if let Some(cn) = &model.heads.centerness_out {
        total += conv(cn);
    }
    if let Some(scales) = &model.heads.scales {
        total += scales.len() as u64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::pyramid::BackboneProfile;
    use crate::safpn::FpnScheme;

    #[test]
    fn both_walks_agree_on_every_scheme() {
        for scheme in FpnScheme::ALL {
            for profile in [BackboneProfile::Tiny, BackboneProfile::FaithfulR50] {
                let model = DetectionModel::build(ModelConfig {
                    profile,
                    fpn_scheme: scheme,
                    ..ModelConfig::default()
                })
                .unwrap();
                let report = count_params(&model);
                assert_eq!(report.total, walk_param_arrays(&model), "{scheme} {profile:?}");
                assert_eq!(report.total, report.trunk + report.fpn + report.heads);
            }
        }
    }

    #[test]
    fn millions_rounding_is_presentation_only() {
        assert_eq!(ParamReport::millions(37_968_692), 38.0);
        assert_eq!(ParamReport::millions(36_484_564), 36.5);
        assert_eq!(ParamReport::millions(2_950_400), 3.0);
        assert_eq!(ParamReport::millions(0), 0.0);
    }

    #[test]
    fn faithful_r50_baseline_report() {
        let model = DetectionModel::build(ModelConfig {
            fpn_scheme: FpnScheme::Baseline,
            ..ModelConfig::default()
        })
        .unwrap();
        let report = count_params(&model);
        assert_eq!(report.trunk, 23_508_032);
        assert_eq!(report.total, 37_968_692);
        assert_eq!(report.total, walk_param_arrays(&model));
    }
}
