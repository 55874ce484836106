//! Randomized structural properties of the kernels and the counting
//! arithmetic: identities that must hold for *every* input, checked over
//! generated shapes and values.

use proptest::prelude::*;

use zcd_core::heads::{count_head_params, HeadConfig, HeadScheme};
use zcd_core::ops::{bilinear_resize, conv2d, fuse, global_avg_pool, softmax_branches};
use zcd_core::pyramid::{halved, level_shapes};
use zcd_core::rng::DetRng;
use zcd_core::safpn::{branch_count, ScaleAttentionBlock};
use zcd_core::{Shape, Tensor};

fn tensor_strategy(
    batch: impl Strategy<Value = usize>,
    channels: impl Strategy<Value = usize>,
    extent: impl Strategy<Value = usize> + Clone,
) -> impl Strategy<Value = Tensor> {
    (batch, channels, extent.clone(), extent).prop_flat_map(|(b, c, h, w)| {
        proptest::collection::vec(-2.0f64..2.0, b * c * h * w)
            .prop_map(move |data| Tensor::from_vec(Shape::new(b, c, h, w), data).unwrap())
    })
}

proptest! {
    // Fewer cases here: each one convolves several volumes.
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Convolution is linear: additive in the input and homogeneous under
    // scalar scaling, once the bias is zero.
    #[test]
    fn conv_is_linear_in_its_input(
        seed in 0u64..1_000,
        b in 1usize..=2,
        cin in 1usize..=3,
        cout in 1usize..=3,
        hw in 3usize..=6,
        alpha in -2.0f64..2.0,
    ) {
        let mut rng = DetRng::new(seed);
        let uniform = zcd_core::rng::Distribution::Uniform { lo: -1.0, hi: 1.0 };
        let x = rng.tensor(uniform, Shape::new(b, cin, hw, hw)).unwrap();
        let y = rng.tensor(uniform, Shape::new(b, cin, hw, hw)).unwrap();
        let k = rng.tensor(uniform, Shape::new(cout, cin, 3, 3)).unwrap();
        let zero_bias = vec![0.0; cout];

        let sum_in = zcd_core::ops::add(&x, &y).unwrap();
        let conv_sum = conv2d(&sum_in, &k, &zero_bias, 1, 1).unwrap();
        let cx = conv2d(&x, &k, &zero_bias, 1, 1).unwrap();
        let cy = conv2d(&y, &k, &zero_bias, 1, 1).unwrap();
        let sum_conv = zcd_core::ops::add(&cx, &cy).unwrap();
        for (a, bb) in conv_sum.data().iter().zip(sum_conv.data()) {
            prop_assert!((a - bb).abs() <= 1e-10);
        }

        let mut scaled = x.clone();
        for v in scaled.data_mut() {
            *v *= alpha;
        }
        let conv_scaled = conv2d(&scaled, &k, &zero_bias, 1, 1).unwrap();
        for (a, bb) in conv_scaled.data().iter().zip(cx.data()) {
            prop_assert!((a - alpha * bb).abs() <= 1e-10);
        }
    }
}

proptest! {
    // Resizing a constant plane yields the same constant, bit for bit.
    #[test]
    fn resize_preserves_constants_exactly(
        value in -10.0f64..10.0,
        in_h in 1usize..=7,
        in_w in 1usize..=7,
        out_h in 1usize..=9,
        out_w in 1usize..=9,
    ) {
        let input = Tensor::filled(Shape::new(1, 2, in_h, in_w), value);
        let out = bilinear_resize(&input, out_h, out_w).unwrap();
        for v in out.data() {
            prop_assert_eq!(*v, value);
        }
    }

    // Resizing to the same extent is the identity.
    #[test]
    fn resize_to_same_extent_is_identity(t in tensor_strategy(1usize..=2, 1usize..=3, 1usize..=6)) {
        let s = t.shape();
        let out = bilinear_resize(&t, s.height, s.width).unwrap();
        prop_assert_eq!(out.data(), t.data());
    }

    // Interpolation never leaves the value range of its source plane.
    #[test]
    fn resize_output_stays_in_plane_range(
        t in tensor_strategy(1usize..=2, 1usize..=2, 1usize..=6),
        out_h in 1usize..=8,
        out_w in 1usize..=8,
    ) {
        let s = t.shape();
        let out = bilinear_resize(&t, out_h, out_w).unwrap();
        for b in 0..s.batch {
            for c in 0..s.channels {
                let plane = t.plane(b, c);
                let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for v in out.plane(b, c) {
                    prop_assert!(*v >= lo && *v <= hi);
                }
            }
        }
    }

    // Branch weights are positive and sum to one per (batch, channel), and
    // shifting every branch's logit for one channel by the same constant
    // leaves the weights untouched.
    #[test]
    fn softmax_is_a_shift_invariant_simplex(
        n in 1usize..=6,
        channels in 1usize..=4,
        shift in -50.0f64..50.0,
        seed in 0u64..1_000,
    ) {
        let mut rng = DetRng::new(seed);
        let uniform = zcd_core::rng::Distribution::Uniform { lo: -10.0, hi: 10.0 };
        let logits: Vec<Tensor> = (0..n)
            .map(|_| rng.tensor(uniform, Shape::new(1, channels, 1, 1)).unwrap())
            .collect();
        let refs: Vec<&Tensor> = logits.iter().collect();
        let weights = softmax_branches(&refs).unwrap();
        for c in 0..channels {
            let mut sum = 0.0;
            for i in 0..n {
                let w = weights.get(0, i, c, 0);
                prop_assert!(w > 0.0 && w <= 1.0);
                sum += w;
            }
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }

        let shifted: Vec<Tensor> = logits
            .iter()
            .map(|t| {
                let mut s = t.clone();
                for v in s.data_mut() {
                    *v += shift;
                }
                s
            })
            .collect();
        let shifted_refs: Vec<&Tensor> = shifted.iter().collect();
        let shifted_weights = softmax_branches(&shifted_refs).unwrap();
        for (a, b) in weights.data().iter().zip(shifted_weights.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    // Rotating the branch list rotates the weights and nothing else.
    #[test]
    fn softmax_commutes_with_branch_rotation(
        n in 2usize..=6,
        rot in 1usize..=5,
        seed in 0u64..1_000,
    ) {
        let rot = rot % n;
        let mut rng = DetRng::new(seed);
        let uniform = zcd_core::rng::Distribution::Uniform { lo: -5.0, hi: 5.0 };
        let logits: Vec<Tensor> = (0..n)
            .map(|_| rng.tensor(uniform, Shape::new(1, 3, 1, 1)).unwrap())
            .collect();
        let refs: Vec<&Tensor> = logits.iter().collect();
        let base = softmax_branches(&refs).unwrap();
        let rotated_refs: Vec<&Tensor> =
            (0..n).map(|i| refs[(i + rot) % n]).collect();
        let rotated = softmax_branches(&rotated_refs).unwrap();
        for i in 0..n {
            for c in 0..3 {
                let a = base.get(0, (i + rot) % n, c, 0);
                let b = rotated.get(0, i, c, 0);
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    // Pooling a constant plane returns that constant.
    #[test]
    fn pool_of_constant_is_constant(
        value in -10.0f64..10.0,
        h in 1usize..=9,
        w in 1usize..=9,
    ) {
        let input = Tensor::filled(Shape::new(2, 3, h, w), value);
        let out = global_avg_pool(&input).unwrap();
        for v in out.data() {
            prop_assert!((v - value).abs() <= 1e-13 * value.abs().max(1.0));
        }
    }

    // Fusing with uniform weights is the arithmetic mean of the branches;
    // fusing with a one-hot weight vector returns the selected branch.
    #[test]
    fn fuse_degenerate_weightings(
        n in 1usize..=6,
        hot in 0usize..6,
        seed in 0u64..1_000,
    ) {
        let hot = hot % n;
        let mut rng = DetRng::new(seed);
        let uniform = zcd_core::rng::Distribution::Uniform { lo: -2.0, hi: 2.0 };
        let branches: Vec<Tensor> = (0..n)
            .map(|_| rng.tensor(uniform, Shape::new(1, 2, 2, 3)).unwrap())
            .collect();
        let refs: Vec<&Tensor> = branches.iter().collect();

        let mean_weights = Tensor::filled(Shape::new(1, n, 2, 1), 1.0 / n as f64);
        let fused = fuse(&refs, &mean_weights).unwrap();
        for idx in 0..fused.data().len() {
            let mut acc = 0.0;
            for t in &branches {
                acc += t.data()[idx];
            }
            prop_assert!((fused.data()[idx] - acc / n as f64).abs() <= 1e-12);
        }

        let mut one_hot = Tensor::zeros(Shape::new(1, n, 2, 1));
        for c in 0..2 {
            one_hot.set(0, hot, c, 0, 1.0);
        }
        let picked = fuse(&refs, &one_hot).unwrap();
        for (a, b) in picked.data().iter().zip(branches[hot].data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    // The per-level reduce/expand bottleneck has a closed-form size.
    #[test]
    fn attention_block_count_matches_closed_form(
        level in 3usize..=7,
        dim in 1usize..=48,
    ) {
        let mut rng = DetRng::new(7);
        let block = ScaleAttentionBlock::build(level, dim, &mut rng).unwrap();
        let c = 256u64;
        let d = dim as u64;
        let n = branch_count(level) as u64;
        let expected = (c * d + d) + n * (d * c + c);
        prop_assert_eq!(block.param_count(), expected);
        prop_assert_eq!(block.branch_count() as u64, n);
    }

    // Pyramid extents: level 3 sits three halvings below the image, each
    // further level is one halving more, and nothing ever collapses to zero.
    #[test]
    fn level_shapes_follow_the_halving_chain(
        h in 1usize..=1024,
        w in 1usize..=1024,
    ) {
        let shapes = level_shapes(h, w);
        let mut eh = h;
        let mut ew = w;
        for _ in 0..3 {
            eh = halved(eh);
            ew = halved(ew);
        }
        for (i, &(sh, sw)) in shapes.iter().enumerate() {
            prop_assert_eq!((sh, sw), (eh, ew), "level {}", i + 3);
            prop_assert!(sh >= 1 && sw >= 1);
            eh = halved(eh);
            ew = halved(ew);
        }
        // halved is ceil(x / 2).
        prop_assert_eq!(halved(h), h / 2 + h % 2);
    }
}

proptest! {
    // Each case builds six full head assemblies, so keep the count small.
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Head parameter totals have closed forms and never depend on the
    // wiring order of the two towers.
    #[test]
    fn head_counts_match_closed_form(
        anchors in 1usize..=12,
        classes in 1usize..=96,
    ) {
        let tower_conv = 9u64 * 256 * 256 + 256;
        let affine = 2u64 * 256;

        let ab = HeadConfig::anchor_based(anchors, classes);
        let a = anchors as u64;
        let k = classes as u64;
        let ab_expected = 8 * tower_conv
            + (9 * 256 * a * k + a * k)
            + (9 * 256 * 4 * a + 4 * a);
        for scheme in HeadScheme::ALL {
            prop_assert_eq!(count_head_params(ab, scheme).unwrap(), ab_expected);
        }

        let af = HeadConfig::anchor_free(classes);
        let af_expected = 8 * (tower_conv + affine)
            + (9 * 256 * k + k)
            + (9 * 256 * 4 + 4)
            + (9 * 256 + 1)
            + 5;
        for scheme in HeadScheme::ALL {
            prop_assert_eq!(count_head_params(af, scheme).unwrap(), af_expected);
        }
    }
}
