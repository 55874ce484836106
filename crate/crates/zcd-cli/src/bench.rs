//! Wall-clock comparison of two head wirings over identical weights.
//!
//! The reference and candidate models are built from the same seed, so every
//! parameter array matches; only the dependency order of the head towers
//! differs. Rounds are interleaved with the in-round order alternating
//! (ref/cand, cand/ref, ...) so slow drift in machine speed lands on both
//! sides equally to first order.

use std::hint::black_box;
use std::time::Instant;

use zcd_core::analysis::{BenchReport, BenchStats, MIN_BENCH_ROUNDS};
use zcd_core::heads::HeadScheme;
use zcd_core::model::DetectionModel;
use zcd_core::rng::{DetRng, Distribution};
use zcd_core::{Shape, Tensor};

use crate::config::RunConfig;

pub const WARMUP_ROUNDS: usize = 3;

pub struct BenchRun {
    pub report: BenchReport,
    pub rounds: usize,
}

pub fn run(cfg: &RunConfig, baseline_scheme: HeadScheme) -> Result<BenchRun, String> {
    if cfg.rounds < MIN_BENCH_ROUNDS {
        return Err(format!(
            "benchmark needs at least {MIN_BENCH_ROUNDS} rounds, got {}",
            cfg.rounds
        ));
    }

    // Identical schemes are allowed: the run then compares a model against
    // an identical twin and the ratio measures pure timing noise.
    let mut reference_cfg = cfg.model_config();
    reference_cfg.head_scheme = baseline_scheme;
    let reference = DetectionModel::build(reference_cfg).map_err(|e| e.to_string())?;
    let candidate = DetectionModel::build(cfg.model_config()).map_err(|e| e.to_string())?;

    let image = sample_image(cfg)?;

    for _ in 0..WARMUP_ROUNDS {
        time_forward(&reference, &image)?;
        time_forward(&candidate, &image)?;
    }

    let mut reference_times = Vec::with_capacity(cfg.rounds);
    let mut candidate_times = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        if round % 2 == 0 {
            reference_times.push(time_forward(&reference, &image)?);
            candidate_times.push(time_forward(&candidate, &image)?);
        } else {
            candidate_times.push(time_forward(&candidate, &image)?);
            reference_times.push(time_forward(&reference, &image)?);
        }
    }

    let reference_stats = BenchStats::from_times(&reference_times).map_err(|e| e.to_string())?;
    let candidate_stats = BenchStats::from_times(&candidate_times).map_err(|e| e.to_string())?;
    let report = BenchReport::compare(
        (baseline_scheme.token(), reference_stats),
        (cfg.head_scheme.token(), candidate_stats),
        WARMUP_ROUNDS,
    );
    Ok(BenchRun {
        report,
        rounds: cfg.rounds,
    })
}

/// Input tensor used by both `forward` and `bench`: the command seed shifted
/// by one so the image draw never aliases a weight draw.
pub fn sample_image(cfg: &RunConfig) -> Result<Tensor, String> {
    let mut rng = DetRng::new(cfg.seed.wrapping_add(1));
    let (h, w) = cfg.image;
    rng.tensor(
        Distribution::Uniform { lo: -1.0, hi: 1.0 },
        Shape::new(1, 3, h, w),
    )
    .map_err(|e| e.to_string())
}

fn time_forward(model: &DetectionModel, image: &Tensor) -> Result<u64, String> {
    let start = Instant::now();
    let pass = model.forward(black_box(image)).map_err(|e| e.to_string())?;
    black_box(&pass);
    let elapsed = start.elapsed().as_nanos();
    Ok(u64::try_from(elapsed).unwrap_or(u64::MAX))
}
