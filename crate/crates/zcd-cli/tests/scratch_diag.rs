//! Throwaway diagnostic: is the residual self-bench deviation temporal
//! noise or a persistent per-instance (allocation layout) effect?

use std::time::Instant;

use zcd_core::analysis::BenchStats;
use zcd_core::heads::{HeadConfig, HeadScheme};
use zcd_core::model::{DetectionModel, ModelConfig};
use zcd_core::pyramid::BackboneProfile;
use zcd_core::rng::{DetRng, Distribution};
use zcd_core::safpn::FpnScheme;
use zcd_core::{Shape, Tensor};

fn make() -> DetectionModel {
    let cfg = ModelConfig {
        profile: BackboneProfile::Tiny,
        fpn_scheme: FpnScheme::AttentionAllLight,
        head_scheme: HeadScheme::Parallel,
        head: HeadConfig {
            anchor_free: false,
            anchors_per_loc: 9,
            num_classes: 80,
            centerness: false,
            norm_affine: false,
        },
        ..ModelConfig::default()
    };
    DetectionModel::build(cfg).expect("model builds")
}

fn forward_ns(model: &DetectionModel, image: &Tensor) -> u64 {
    let t = Instant::now();
    let pass = model.forward(std::hint::black_box(image)).expect("forward runs");
    std::hint::black_box(&pass);
    u64::try_from(t.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

fn ratio(models: &[&DetectionModel; 2], image: &Tensor, rounds: usize) -> f64 {
    let mut times: Vec<Vec<u64>> = vec![Vec::new(); 2];
    for _ in 0..3 {
        for m in models {
            forward_ns(m, image);
        }
    }
    for r in 0..rounds {
        for j in 0..2 {
            let i = (r + j) % 2;
            times[i].push(forward_ns(models[i], image));
        }
    }
    let med: Vec<u64> = times
        .iter()
        .map(|t| BenchStats::from_times(t).unwrap().median_ns)
        .collect();
    med[1] as f64 / med[0] as f64
}

#[test]
fn layout_vs_temporal() {
    let a = make();
    let b = make();
    let mut rng = DetRng::new(7);
    let image = rng
        .tensor(Distribution::Uniform { lo: -1.0, hi: 1.0 }, Shape::new(1, 3, 40, 48))
        .unwrap();

    for rep in 0..3 {
        println!("twin  b/a rep {rep}: {:.4}", ratio(&[&a, &b], &image, 16));
    }
    println!("twin  a/b rev   : {:.4}", ratio(&[&b, &a], &image, 16));
    for rep in 0..3 {
        println!("same  a/a rep {rep}: {:.4}", ratio(&[&a, &a], &image, 16));
    }
}
