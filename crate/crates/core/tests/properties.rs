//! Randomised invariants.

use pdae_core::genmodel::{complex_exp_inverse, mix, MixingSpec};
use pdae_core::harness::{in_region, sample_test_label, Arity, TestKind};
use pdae_core::metrics::{energy_distance, mean_difference, median_heuristic, mmd_squared, KernelSpec, SampleSet};
use pdae_core::numeric::{gaussian_sample, pairwise_distances, Activation, Mlp};
use pdae_core::pdae::{sample_minibatches, sparsity_penalty, PredictionWeights};
use pdae_core::{Matrix, SeededRng};
use proptest::prelude::*;

fn sample(seed: u64, n: usize, d: usize, shift: f64) -> SampleSet {
    SampleSet::new(gaussian_sample(&mut SeededRng::new(seed), &vec![shift; d], 1.0, n)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_distance_is_twice_the_distance_kernel_mmd(
        seed in any::<u64>(), n in 1usize..12, m in 1usize..12, d in 1usize..4, beta in 0.2f64..2.0,
    ) {
        let x = sample(seed, n, d, 0.0);
        let y = sample(seed ^ 1, m, d, 0.7);
        let ed = energy_distance(&x, &y, beta).unwrap();
        let mmd = mmd_squared(&x, &y, KernelSpec::Distance { beta }).unwrap();
        prop_assert!((ed - 2.0 * mmd).abs() < 1e-10);
        prop_assert!(ed >= -1e-12);
        let back = energy_distance(&y, &x, beta).unwrap();
        prop_assert!((ed - back).abs() < 1e-12);
        prop_assert!(energy_distance(&x, &x, beta).unwrap().abs() < 1e-12);
    }

    #[test]
    fn beta_two_energy_distance_is_a_mean_gap(seed in any::<u64>(), n in 1usize..10, m in 1usize..10) {
        let x = sample(seed, n, 3, 0.0);
        let y = sample(seed ^ 7, m, 3, 1.0);
        let gap = mean_difference(x.points(), y.points()).unwrap();
        let ed = energy_distance(&x, &y, 2.0).unwrap();
        prop_assert!((ed - 2.0 * gap * gap).abs() < 1e-10);
    }

    #[test]
    fn median_bandwidth_scales_with_the_data(seed in any::<u64>(), c in 0.1f64..10.0) {
        let x = sample(seed, 6, 2, 0.0);
        let y = sample(seed ^ 3, 5, 2, 1.0);
        let h = median_heuristic(x.points(), y.points()).unwrap();
        let hc = median_heuristic(&x.points().scale(c), &y.points().scale(c)).unwrap();
        prop_assert!((hc - c * h).abs() < 1e-10 * (1.0 + hc));
    }

    #[test]
    fn distances_are_symmetric(seed in any::<u64>(), beta in 0.1f64..2.0) {
        let x = sample(seed, 5, 3, 0.0).into_matrix();
        let y = sample(seed ^ 5, 4, 3, 0.0).into_matrix();
        let dxy = pairwise_distances(&x, &y, beta).unwrap();
        let dyx = pairwise_distances(&y, &x, beta).unwrap();
        prop_assert!(dxy.max_abs_diff(&dyx.transpose()) == 0.0);
        prop_assert!(dxy.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn complex_exp_inverts_on_the_strip(r in -3.0f64..3.0, t in -3.14f64..3.14) {
        let z = Matrix::from_rows(&[[r, t]]).unwrap();
        let back = complex_exp_inverse(&mix(&MixingSpec::ComplexExp, &z).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&z) < 1e-10);
    }

    #[test]
    fn networks_compose_only_when_widths_chain(a in 1usize..5, b in 1usize..5, c in 1usize..5) {
        let mut rng = SeededRng::new(0);
        let first = Mlp::init(&[a, 3, b], Activation::Tanh, &mut rng).unwrap();
        let second = Mlp::init(&[c, 2], Activation::Tanh, &mut rng).unwrap();
        let out = first.forward(&Matrix::zeros(2, a)).unwrap();
        prop_assert_eq!(second.forward(&out).is_ok(), b == c);
        prop_assert!(first.forward(&Matrix::zeros(2, a + 1)).is_err());
    }

    #[test]
    fn minibatches_visit_every_point_each_epoch(
        sizes in prop::collection::vec(1usize..40, 2..5), per in 1usize..16, seed in any::<u64>(),
    ) {
        let plan = sample_minibatches(&sizes, per, &mut SeededRng::new(seed)).unwrap();
        let largest = *sizes.iter().max().unwrap();
        prop_assert_eq!(plan.len(), largest.div_ceil(per));
        for (e, &n) in sizes.iter().enumerate() {
            let mut seen = vec![false; n];
            for step in &plan {
                prop_assert_eq!(step[e].len(), per);
                for &i in &step[e] {
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|s| *s));
        }
    }

    #[test]
    fn sparsity_penalty_is_homogeneous(seed in any::<u64>(), s in 0.0f64..5.0) {
        let w = sample(seed, 3, 4, 0.0).into_matrix();
        let (v, _) = sparsity_penalty(&w);
        let (vs, _) = sparsity_penalty(&w.scale(s));
        prop_assert!(v >= 0.0);
        prop_assert!((vs - s * v).abs() < 1e-10 * (1.0 + vs));
    }

    #[test]
    fn normalized_weights_sum_to_one(w in prop::collection::vec(0.0f64..10.0, 1..8)) {
        match PredictionWeights::normalized(w.clone()) {
            Ok(p) => {
                let total: f64 = p.as_slice().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            Err(_) => prop_assert!(w.iter().sum::<f64>() == 0.0),
        }
    }

    #[test]
    fn sampled_labels_satisfy_their_predicates(seed in any::<u64>(), ood in any::<bool>(), double in any::<bool>()) {
        let kind = if ood { TestKind::Ood } else { TestKind::Id };
        let arity = if double { Arity::Double } else { Arity::Single };
        let a = sample_test_label(&mut SeededRng::new(seed), kind, arity, 3).unwrap();
        prop_assert!(in_region(&a, kind, arity));
    }

    #[test]
    fn seeded_sampling_is_bit_identical(seed in any::<u64>()) {
        let a = gaussian_sample(&mut SeededRng::new(seed), &[1.0, -2.0], 0.5, 7);
        let b = gaussian_sample(&mut SeededRng::new(seed), &[1.0, -2.0], 0.5, 7);
        prop_assert_eq!(a, b);
    }
}
