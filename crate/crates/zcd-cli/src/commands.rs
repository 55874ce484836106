//! One function per subcommand. Each prints a human-readable report to
//! stdout and, when `--json PATH` is given, writes a machine-readable
//! document with stable keys to that path. Functions return `Ok(true)` when
//! the command succeeded and any embedded checks passed, `Ok(false)` when a
//! check failed, and `Err` for configuration or environment problems.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use zcd_core::analysis::{
    attention_checks, count_flops, count_params, counting_checks, flop_checks, gradient_checks,
    structural_checks, CheckOutcome, GradCheckConfig,
};
use zcd_core::heads::HeadScheme;
use zcd_core::model::DetectionModel;

use crate::bench;
use crate::config::RunConfig;

pub fn cmd_params(cfg: &RunConfig, json_path: Option<&Path>) -> Result<bool, String> {
    let model = build(cfg)?;
    let report = count_params(&model);

    println!("parameters ({})", describe(cfg));
    println!("  trunk  {:>14}", group(report.trunk));
    println!("  fpn    {:>14}", group(report.fpn));
    println!("  heads  {:>14}", group(report.heads));
    println!(
        "  total  {:>14}  = {:.1}M",
        group(report.total),
        report.total_millions()
    );

    write_json(
        json_path,
        json!({
            "command": "params",
            "seed": cfg.seed,
            "params": {
                "total": report.total,
                "total_millions": report.total_millions(),
                "by_component": {
                    "trunk": report.trunk,
                    "fpn": report.fpn,
                    "heads": report.heads,
                },
            },
        }),
    )?;
    Ok(true)
}

pub fn cmd_flops(cfg: &RunConfig, json_path: Option<&Path>) -> Result<bool, String> {
    let model = build(cfg)?;
    let (h, w) = cfg.image;
    let report = count_flops(&model, h, w).map_err(|e| e.to_string())?;

    println!("forward cost at {h}x{w} ({})", describe(cfg));
    let name_width = report
        .layers
        .iter()
        .map(|l| l.name.len())
        .max()
        .unwrap_or(0);
    for layer in &report.layers {
        println!("  {:<name_width$}  {:>16}", layer.name, group(layer.macs));
    }
    println!(
        "  {:<name_width$}  {:>16}  MACs ({} FLOPs)",
        "total",
        group(report.total_macs),
        group(report.total_flops)
    );

    let layers: Vec<Value> = report
        .layers
        .iter()
        .map(|l| json!({"name": l.name, "macs": l.macs}))
        .collect();
    write_json(
        json_path,
        json!({
            "command": "flops",
            "seed": cfg.seed,
            "image": {"height": h, "width": w},
            "flops": {
                "total": report.total_flops,
                "total_macs": report.total_macs,
                "layers": layers,
            },
        }),
    )?;
    Ok(true)
}

pub fn cmd_gradcheck(cfg: &RunConfig, json_path: Option<&Path>) -> Result<bool, String> {
    let outcomes = gradient_checks();
    print_outcomes(&outcomes);

    let worst = outcomes
        .iter()
        .filter_map(|o| o.metric)
        .fold(0.0_f64, f64::max);
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    let tolerance = GradCheckConfig::default().tolerance;
    println!(
        "gradcheck: {} checks, {} failed; worst relative error {:.3e} (tolerance {:.1e})",
        outcomes.len(),
        failed,
        worst,
        tolerance
    );

    write_json(
        json_path,
        json!({
            "command": "gradcheck",
            "seed": cfg.seed,
            "gradcheck": {
                "max_rel_err": worst,
                "tolerance": tolerance,
                "pass": failed == 0,
                "checks": outcome_values(&outcomes),
            },
        }),
    )?;
    Ok(failed == 0)
}

pub fn cmd_verify(
    cfg: &RunConfig,
    only: Option<&str>,
    json_path: Option<&Path>,
) -> Result<bool, String> {
    // Family token, shared id prefix, and runner. Ids always start with
    // their family's prefix, so a prefix filter needs to run only the
    // families whose prefix is compatible with it.
    let families: [(&str, &str, fn() -> Vec<CheckOutcome>); 5] = [
        ("params", "params-", counting_checks),
        ("flops", "flops-", flop_checks),
        ("gradcheck", "grad-", gradient_checks),
        ("attention", "attention-", attention_checks),
        ("structure", "structure-", structural_checks),
    ];

    let mut outcomes = Vec::new();
    match only {
        None => {
            for (_, _, run) in families {
                outcomes.extend(run());
            }
        }
        Some(filter) => {
            if let Some((_, _, run)) = families.iter().find(|(family, _, _)| *family == filter) {
                outcomes.extend(run());
            } else {
                for (_, prefix, run) in families {
                    if filter.starts_with(prefix) || prefix.starts_with(filter) {
                        outcomes.extend(run().into_iter().filter(|o| o.id.starts_with(filter)));
                    }
                }
            }
            if outcomes.is_empty() {
                return Err(format!(
                    "--only {filter:?} matches nothing; families are params, flops, gradcheck, attention, structure"
                ));
            }
        }
    }

    print_outcomes(&outcomes);
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("verify: {} checks, {} failed", outcomes.len(), failed);

    write_json(
        json_path,
        json!({
            "command": "verify",
            "seed": cfg.seed,
            "verify": {
                "pass": failed == 0,
                "total": outcomes.len(),
                "failed": failed,
                "checks": outcome_values(&outcomes),
            },
        }),
    )?;
    Ok(failed == 0)
}

pub fn cmd_forward(
    cfg: &RunConfig,
    dump_attention: bool,
    json_path: Option<&Path>,
) -> Result<bool, String> {
    let model = build(cfg)?;
    let image = bench::sample_image(cfg)?;
    let pass = model.forward(&image).map_err(|e| e.to_string())?;

    let (h, w) = cfg.image;
    println!("forward at {h}x{w} ({})", describe(cfg));
    let mut levels = Vec::new();
    for (i, &node) in pass.pyramid.levels.iter().enumerate() {
        let level = i + 3;
        let t = pass.graph.value(node).map_err(|e| e.to_string())?;
        let s = t.shape();
        println!(
            "  P{level}  {:<12}  min {:>13.6e}  mean {:>13.6e}  max {:>13.6e}",
            s.to_string(),
            t.min(),
            t.mean(),
            t.max()
        );
        levels.push(json!({
            "level": level,
            "shape": [s.batch, s.channels, s.height, s.width],
            "min": t.min(),
            "mean": t.mean(),
            "max": t.max(),
        }));
    }

    let mut attention_rows: Option<Vec<Value>> = None;
    if dump_attention {
        if pass.pyramid.attention.is_empty() {
            println!("attention: none (scheme {} has no attention blocks)", cfg.fpn_scheme.token());
            attention_rows = Some(Vec::new());
        } else {
            println!("attention weights (level branch channel weight):");
            let mut rows = Vec::new();
            for &(level, node) in &pass.pyramid.attention {
                let t = pass.graph.value(node).map_err(|e| e.to_string())?;
                let s = t.shape();
                for branch in 0..s.channels {
                    for channel in 0..s.height {
                        // Shortest round-trip float formatting, so the
                        // dumped simplex sums exactly like the tensor.
                        let wgt = t.get(0, branch, channel, 0);
                        println!("  {level} {branch} {channel} {wgt}");
                        rows.push(json!({
                            "level": level,
                            "branch": branch,
                            "channel": channel,
                            "weight": wgt,
                        }));
                    }
                }
            }
            attention_rows = Some(rows);
        }
    }

    let mut doc = json!({
        "command": "forward",
        "seed": cfg.seed,
        "image": {"height": h, "width": w},
        "forward": {"levels": levels},
    });
    if let Some(rows) = attention_rows {
        doc["forward"]["attention"] = Value::Array(rows);
    }
    write_json(json_path, doc)?;
    Ok(true)
}

pub fn cmd_bench(
    cfg: &RunConfig,
    baseline_scheme: &str,
    json_path: Option<&Path>,
) -> Result<bool, String> {
    let baseline = HeadScheme::parse(baseline_scheme).ok_or_else(|| {
        format!("invalid baseline scheme {baseline_scheme:?}; expected one of: parallel, cls-first, reg-first")
    })?;
    let run = bench::run(cfg, baseline)?;
    let report = &run.report;

    let (h, w) = cfg.image;
    println!(
        "bench {} vs {} at {h}x{w} ({}, {} rounds + {} warmup)",
        report.candidate, report.reference, describe(cfg), run.rounds, report.warmup
    );
    println!(
        "  {:<10}  median {:>12}  mean {:>12}",
        report.reference,
        fmt_ns(report.reference_stats.median_ns),
        fmt_ns(report.reference_stats.mean_ns)
    );
    println!(
        "  {:<10}  median {:>12}  mean {:>12}",
        report.candidate,
        fmt_ns(report.candidate_stats.median_ns),
        fmt_ns(report.candidate_stats.mean_ns)
    );
    println!(
        "  ratio ({} / {}): {:.4}",
        report.candidate, report.reference, report.ratio
    );

    write_json(
        json_path,
        json!({
            "command": "bench",
            "seed": cfg.seed,
            "image": {"height": h, "width": w},
            "bench": {
                "median_ns": report.candidate_stats.median_ns,
                "ratio": report.ratio,
                "rounds": run.rounds,
                "warmup": report.warmup,
                "reference": {
                    "scheme": report.reference,
                    "median_ns": report.reference_stats.median_ns,
                    "mean_ns": report.reference_stats.mean_ns,
                },
                "candidate": {
                    "scheme": report.candidate,
                    "median_ns": report.candidate_stats.median_ns,
                    "mean_ns": report.candidate_stats.mean_ns,
                },
            },
        }),
    )?;
    Ok(true)
}

fn build(cfg: &RunConfig) -> Result<DetectionModel, String> {
    DetectionModel::build(cfg.model_config()).map_err(|e| e.to_string())
}

fn describe(cfg: &RunConfig) -> String {
    format!(
        "{} / {} / {}, seed {}",
        cfg.profile.token(),
        cfg.fpn_scheme.token(),
        cfg.head_scheme.token(),
        cfg.seed
    )
}

fn print_outcomes(outcomes: &[CheckOutcome]) {
    let id_width = outcomes.iter().map(|o| o.id.len()).max().unwrap_or(0);
    let module_width = outcomes.iter().map(|o| o.module.len()).max().unwrap_or(0);
    for o in outcomes {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {:<id_width$}  [{:<module_width$}]  {}; measured: {}",
            o.id, o.module, o.claim, o.measured
        );
    }
}

fn outcome_values(outcomes: &[CheckOutcome]) -> Vec<Value> {
    outcomes
        .iter()
        .map(|o| {
            let mut v = json!({
                "id": o.id,
                "module": o.module,
                "claim": o.claim,
                "measured": o.measured,
                "pass": o.pass,
            });
            if let Some(metric) = o.metric {
                v["metric"] = json!(metric);
            }
            v
        })
        .collect()
}

fn write_json(path: Option<&Path>, doc: Value) -> Result<(), String> {
    let Some(path) = path else { return Ok(()) };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?;
    fs::write(path, text + "\n")
        .map_err(|e| format!("cannot write JSON report {}: {e}", path.display()))
}

/// Thousands separators for parameter and operation counts.
fn group(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn fmt_ns(ns: u64) -> String {
    let ns = ns as f64;
    if ns < 1_000.0 {
        format!("{ns:.0} ns")
    } else if ns < 1_000_000.0 {
        format!("{:.2} us", ns / 1_000.0)
    } else if ns < 1_000_000_000.0 {
        format!("{:.2} ms", ns / 1_000_000.0)
    } else {
        format!("{:.3} s", ns / 1_000_000_000.0)
    }
}
