//! Finite-difference gradient checking.
//!
//! The check builds a scalar loss — a fixed random projection of the graph
//! outputs — computes analytic gradients with one backward pass, then
//! perturbs leaf elements by ±ε and re-runs the forward tape to form
//! central differences `(f(x+ε) − f(x−ε)) / 2ε`. Relative error per element
//! is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`; a group
//! (one leaf tensor) passes when its worst element stays under the
//! tolerance. Everything runs in `f64`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::rng::{DetRng, Distribution};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Cap on elements checked per leaf; `None` checks every element.
    /// Sampled indices are drawn deterministically from `seed`.
    pub samples_per_group: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-4,
            samples_per_group: None,
            seed: 1234,
        }
    }
}

/// Result for one leaf tensor.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GroupResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub pass: bool,
    /// Set when the group failed for a non-numeric reason (non-finite
    /// values), naming where the problem appeared.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupResult>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().fold(0.0, |m, g| m.max(g.max_rel_err))
    }

    pub fn pass(&self) -> bool {
        !self.groups.is_empty() && self.groups.iter().all(|g| g.pass)
    }

    pub fn failed(&self) -> impl Iterator<Item = &GroupResult> {
        self.groups.iter().filter(|g| !g.pass)
    }
}

/// Check every trainable leaf of `graph` against central differences of a
/// random projection of `outputs`. The graph is left in its original state
/// (all perturbations are undone and the tape re-evaluated).
pub fn check_graph(
    graph: &mut Graph,
    outputs: &[NodeId],
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = DetRng::new(config.seed);
    let mut seeds = Vec::with_capacity(outputs.len());
    for &out in outputs {
        let shape = graph.value(out)?.shape();
        let proj = rng.tensor(Distribution::Uniform { lo: -1.0, hi: 1.0 }, shape)?;
        seeds.push((out, proj));
    }

    let loss = |g: &Graph| -> Result<f64> {
        let mut acc = 0.0;
        for (out, proj) in &seeds {
            let value = g.value(*out)?;
            for (v, p) in value.data().iter().zip(proj.data()) {
                acc += v * p;
            }
        }
        Ok(acc)
    };

    let analytic = graph.backward(&seeds)?;
    let leaves: Vec<(NodeId, String)> = graph
        .parameters()
        .map(|(id, name)| (id, String::from(name)))
        .collect();

    let mut groups = Vec::with_capacity(leaves.len());
    for (id, name) in leaves {
        let grad = analytic.wrt(id)?.cloned();
        if let Some(g) = &grad {
            if !g.all_finite() {
                groups.push(GroupResult {
                    name: name.clone(),
                    checked: 0,
                    max_rel_err: f64::INFINITY,
                    pass: false,
                    failure: Some(alloc::format!(
                        "non-finite analytic gradient for {name}"
                    )),
                });
                continue;
            }
        }
        let len = graph.value(id)?.data().len();
        let indices: Vec<usize> = match config.samples_per_group {
            Some(cap) if len > cap => (0..cap).map(|_| rng.index(len)).collect(),
            _ => (0..len).collect(),
        };
        let mut max_rel = 0.0f64;
        let mut failure = None;
        for &idx in &indices {
            let original = graph.value(id)?.data()[idx];
            let eval_at = |x: f64, g: &mut Graph| -> Result<f64> {
                g.leaf_value_mut(id)?.data_mut()[idx] = x;
                g.recompute()?;
                loss(g)
            };
            let plus = eval_at(original + config.epsilon, graph)?;
            let minus = eval_at(original - config.epsilon, graph)?;
            // Restore the leaf; the tape itself is re-evaluated by the next
            // perturbation, or by the final recompute below.
            graph.leaf_value_mut(id)?.data_mut()[idx] = original;
            if !plus.is_finite() || !minus.is_finite() {
                failure = Some(alloc::format!(
                    "non-finite loss perturbing {name}[{idx}]"
                ));
                max_rel = f64::INFINITY;
                break;
            }
            let numeric = (plus - minus) / (2.0 * config.epsilon);
            let a = grad.as_ref().map_or(0.0, |g| g.data()[idx]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        groups.push(GroupResult {
            pass: failure.is_none() && max_rel < config.tolerance,
            name,
            checked: indices.len(),
            max_rel_err: max_rel,
            failure,
        });
    }

    graph.recompute()?;
    Ok(GradCheckReport {
        epsilon: config.epsilon,
        tolerance: config.tolerance,
        groups,
    })
}
