//! End-to-end acceptance checks, one test per headline claim. Each test
//! prints a single `[PASS]` line with its measured evidence; a failure
//! panics with the same evidence. Budgets are asserted from a timer started
//! inside the test so the suite stays honest about runtime as well as
//! arithmetic.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use zcd_core::analysis::{
    attention_checks, count_flops, count_params, gradient_checks, structural_checks, BenchStats,
};
use zcd_core::heads::{HeadConfig, HeadScheme};
use zcd_core::model::{DetectionModel, ModelConfig};
use zcd_core::pyramid::BackboneProfile;
use zcd_core::rng::{DetRng, Distribution};
use zcd_core::safpn::FpnScheme;
use zcd_core::{Shape, Tensor};

/// Serializes the wall-clock-sensitive tests (latency ratio, gradient
/// sweep) so they never compete for cores with each other.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy_guard() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn config(profile: BackboneProfile, fpn: FpnScheme, scheme: HeadScheme, head: HeadConfig) -> ModelConfig {
    ModelConfig {
        profile,
        fpn_scheme: fpn,
        head_scheme: scheme,
        head,
        ..ModelConfig::default()
    }
}

fn build(cfg: ModelConfig) -> DetectionModel {
    DetectionModel::build(cfg).expect("model builds")
}

fn within_budget(start: Instant, budget: Duration, what: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed <= budget,
        "{what} took {elapsed:?}, over the {budget:?} budget"
    );
}

const ANCHOR: HeadConfig = HeadConfig {
    anchor_free: false,
    anchors_per_loc: 9,
    num_classes: 80,
    centerness: false,
    norm_affine: false,
};

#[test]
fn baseline_parameter_totals_hit_published_sizes() {
    let free = HeadConfig::anchor_free(80);
    let cases = [
        ("r50 anchor", BackboneProfile::FaithfulR50, ANCHOR, 37_700_000u64),
        ("r50 anchor-free", BackboneProfile::FaithfulR50, free, 32_000_000),
        ("r101 anchor", BackboneProfile::FaithfulR101, ANCHOR, 56_600_000),
        ("r101 anchor-free", BackboneProfile::FaithfulR101, free, 51_000_000),
    ];
    let mut evidence = Vec::new();
    for (name, profile, head, target) in cases {
        let start = Instant::now();
        let model = build(config(profile, FpnScheme::Baseline, HeadScheme::Parallel, head));
        let total = count_params(&model).total;
        within_budget(start, Duration::from_secs(1), name);
        let deviation = (total as f64 - target as f64).abs() / target as f64;
        assert!(
            deviation <= 0.02,
            "{name}: total {total} deviates {:.2}% from {target}",
            deviation * 100.0
        );
        evidence.push(format!("{name} {total} ({:+.2}%)", (total as f64 / target as f64 - 1.0) * 100.0));
    }
    println!("[PASS] baseline parameter totals within 2%: {}", evidence.join(", "));
}

#[test]
fn attention_variant_delta_matches_closed_form() {
    let light = build(config(
        BackboneProfile::FaithfulR50,
        FpnScheme::AttentionAllLight,
        HeadScheme::Parallel,
        ANCHOR,
    ));
    let full = build(config(
        BackboneProfile::FaithfulR50,
        FpnScheme::AttentionAll,
        HeadScheme::Parallel,
        ANCHOR,
    ));
    // Five 3x3 256->256 convolutions with biases.
    let expected = 5 * (3 * 3 * 256 * 256 + 256) as u64;
    assert_eq!(expected, 2_950_400);
    let fpn_delta = full.fpn_params() - light.fpn_params();
    let total_delta = full.total_params() - light.total_params();
    assert_eq!(fpn_delta, expected, "pyramid delta");
    assert_eq!(total_delta, expected, "total delta");
    println!(
        "[PASS] dropping the five post convolutions saves exactly {fpn_delta} parameters"
    );
}

#[test]
fn head_parameters_identical_across_wirings() {
    for head in [ANCHOR, HeadConfig::anchor_free(80)] {
        let counts: Vec<u64> = HeadScheme::ALL
            .into_iter()
            .map(|scheme| {
                build(config(BackboneProfile::Tiny, FpnScheme::AttentionAllLight, scheme, head))
                    .head_params()
            })
            .collect();
        assert!(counts[0] > 0);
        assert_eq!(counts[0], counts[1], "cls-first vs parallel ({head:?})");
        assert_eq!(counts[0], counts[2], "reg-first vs parallel ({head:?})");
    }
    println!("[PASS] head parameter counts are identical across all three wirings");
}

#[test]
fn scheme_orderings_hold_for_every_variant() {
    let total = |profile, fpn, head| {
        build(config(profile, fpn, HeadScheme::Parallel, head)).total_params()
    };

    // Full chain on the r50 anchor variant.
    let light = total(BackboneProfile::FaithfulR50, FpnScheme::AttentionAllLight, ANCHOR);
    let base = total(BackboneProfile::FaithfulR50, FpnScheme::Baseline, ANCHOR);
    let full = total(BackboneProfile::FaithfulR50, FpnScheme::AttentionAll, ANCHOR);
    assert!(light < base, "light {light} < baseline {base}");
    assert!(base < full, "baseline {base} < full {full}");

    // The light variant undercuts the baseline for every backbone/head pair.
    let free = HeadConfig::anchor_free(80);
    let pairs = [
        ("r50 anchor", BackboneProfile::FaithfulR50, ANCHOR),
        ("r50 anchor-free", BackboneProfile::FaithfulR50, free),
        ("r101 anchor", BackboneProfile::FaithfulR101, ANCHOR),
        ("r101 anchor-free", BackboneProfile::FaithfulR101, free),
    ];
    let mut evidence = vec![format!("{light} < {base} < {full}")];
    for (name, profile, head) in pairs {
        let l = total(profile, FpnScheme::AttentionAllLight, head);
        let b = total(profile, FpnScheme::Baseline, head);
        assert!(l < b, "{name}: light {l} not below baseline {b}");
        evidence.push(format!("{name} {l}<{b}"));
    }
    println!("[PASS] scheme orderings: {}", evidence.join("; "));
}

#[test]
fn head_wirings_cost_identical_flops() {
    let start = Instant::now();
    let cases = [
        (BackboneProfile::FaithfulR50, 256usize, 320usize),
        (BackboneProfile::Tiny, 64, 80),
    ];
    for (profile, h, w) in cases {
        let totals: Vec<u64> = HeadScheme::ALL
            .into_iter()
            .map(|scheme| {
                let model = build(config(profile, FpnScheme::AttentionAllLight, scheme, ANCHOR));
                count_flops(&model, h, w).expect("cost walk").total_macs
            })
            .collect();
        assert_eq!(totals[0], totals[1], "cls-first vs parallel at {h}x{w}");
        assert_eq!(totals[0], totals[2], "reg-first vs parallel at {h}x{w}");
    }
    within_budget(start, Duration::from_secs(1), "flop parity");
    println!("[PASS] forward cost is wiring-independent (exact multiply-accumulate parity)");
}

/// One timed forward pass, wall clock.
fn forward_ns(model: &DetectionModel, image: &Tensor) -> u64 {
    let t = Instant::now();
    let pass = model.forward(std::hint::black_box(image)).expect("forward runs");
    std::hint::black_box(&pass);
    u64::try_from(t.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

/// Append `rounds` timed rounds for every model. The in-round visiting
/// order rotates so each model occupies each position equally, cancelling
/// slow machine-speed drift to first order.
fn collect_rounds(
    models: &[&DetectionModel],
    image: &Tensor,
    rounds: usize,
    times: &mut [Vec<u64>],
) {
    let k = models.len();
    for _ in 0..rounds {
        let done = times[0].len();
        for j in 0..k {
            let i = (done + j) % k;
            times[i].push(forward_ns(models[i], image));
        }
    }
}

/// The shared timing-noise policy: start with a modest round count and,
/// while any ratio sits outside the band and budget remains, keep adding
/// rounds and recompute over the whole sample. More data only tightens the
/// estimate around the true ratio, so a genuine cost difference still
/// fails; transient load spikes stop mattering.
fn ratios_against_first(
    models: &[&DetectionModel],
    image: &Tensor,
    band: (f64, f64),
    soft_cap: Duration,
) -> (Vec<f64>, usize) {
    const WARMUP: usize = 3;
    const INITIAL_ROUNDS: usize = 16;
    const BLOCK: usize = 8;
    const MAX_ROUNDS: usize = 64;

    let start = Instant::now();
    for _ in 0..WARMUP {
        for model in models {
            forward_ns(model, image);
        }
    }
    let mut times: Vec<Vec<u64>> = vec![Vec::new(); models.len()];
    collect_rounds(models, image, INITIAL_ROUNDS, &mut times);
    loop {
        let medians: Vec<u64> = times
            .iter()
            .map(|t| BenchStats::from_times(t).expect("enough rounds").median_ns)
            .collect();
        let ratios: Vec<f64> = medians[1..]
            .iter()
            .map(|&m| m as f64 / medians[0] as f64)
            .collect();
        let settled = ratios.iter().all(|r| (band.0..=band.1).contains(r));
        if settled || times[0].len() >= MAX_ROUNDS || start.elapsed() >= soft_cap {
            return (ratios, times[0].len());
        }
        collect_rounds(models, image, BLOCK, &mut times);
    }
}

fn bench_image() -> Tensor {
    let mut rng = DetRng::new(7);
    rng.tensor(Distribution::Uniform { lo: -1.0, hi: 1.0 }, Shape::new(1, 3, 40, 48))
        .expect("image draws")
}

#[test]
fn sequential_heads_run_at_parallel_speed() {
    let _guard = heavy_guard();
    let start = Instant::now();

    let make = |scheme| {
        build(config(BackboneProfile::Tiny, FpnScheme::AttentionAllLight, scheme, ANCHOR))
    };
    let parallel = make(HeadScheme::Parallel);
    let cls_first = make(HeadScheme::ClsFirst);
    let reg_first = make(HeadScheme::RegFirst);
    let image = bench_image();

    let (ratios, rounds) = ratios_against_first(
        &[&parallel, &cls_first, &reg_first],
        &image,
        (0.95, 1.05),
        Duration::from_secs(24),
    );
    within_budget(start, Duration::from_secs(30), "latency comparison");
    assert!(rounds >= 10, "need at least ten measured rounds");
    for (name, ratio) in [("cls-first", ratios[0]), ("reg-first", ratios[1])] {
        assert!(
            (0.95..=1.05).contains(&ratio),
            "{name} / parallel median ratio {ratio:.4} outside [0.95, 1.05] after {rounds} rounds"
        );
    }
    println!(
        "[PASS] sequential wirings run at parallel speed: cls-first {:.4}, reg-first {:.4} over {rounds} rounds",
        ratios[0], ratios[1]
    );
}

#[test]
fn a_model_benched_against_itself_sits_at_unity() {
    let _guard = heavy_guard();

    let make = || build(config(BackboneProfile::Tiny, FpnScheme::AttentionAllLight, HeadScheme::Parallel, ANCHOR));
    let reference = make();
    let twin = make();
    let image = bench_image();

    let (ratios, rounds) = ratios_against_first(
        &[&reference, &twin],
        &image,
        (0.98, 1.02),
        Duration::from_secs(24),
    );
    assert!(
        (0.98..=1.02).contains(&ratios[0]),
        "self-comparison median ratio {:.4} outside [0.98, 1.02] after {rounds} rounds",
        ratios[0]
    );
    println!(
        "[PASS] a model benched against itself sits at unity: ratio {:.4} over {rounds} rounds",
        ratios[0]
    );
}

#[test]
fn gradients_match_finite_differences() {
    let _guard = heavy_guard();
    let start = Instant::now();
    let outcomes = gradient_checks();
    within_budget(start, Duration::from_secs(60), "gradient sweep");

    assert!(!outcomes.is_empty());
    let mut worst = 0.0_f64;
    for outcome in &outcomes {
        assert!(outcome.pass, "{}: {}", outcome.id, outcome.measured);
        if let Some(metric) = outcome.metric {
            assert!(
                metric < 1e-4,
                "{}: relative error {metric:.3e} reaches 1e-4",
                outcome.id
            );
            worst = worst.max(metric);
        }
    }
    println!(
        "[PASS] gradients match finite differences: {} checks, worst relative error {worst:.3e}",
        outcomes.len()
    );
}

#[test]
fn attention_weights_behave_as_documented() {
    let start = Instant::now();
    let outcomes = attention_checks();
    within_budget(start, Duration::from_secs(10), "attention properties");
    assert!(!outcomes.is_empty());
    for outcome in &outcomes {
        assert!(outcome.pass, "{}: {}", outcome.id, outcome.measured);
    }
    println!(
        "[PASS] attention weights behave as documented: {} property checks",
        outcomes.len()
    );
}

#[test]
fn structure_follows_the_documented_rules() {
    let start = Instant::now();
    let outcomes = structural_checks();
    within_budget(start, Duration::from_secs(10), "structural rules");
    assert!(!outcomes.is_empty());
    for outcome in &outcomes {
        assert!(outcome.pass, "{}: {}", outcome.id, outcome.measured);
    }
    println!(
        "[PASS] structure follows the documented rules: {} checks",
        outcomes.len()
    );
}
