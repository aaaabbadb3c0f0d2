//! Randomized invariants, 1000 cases each.

mod common;

use common::{random_tile, single_tile_set, tiny_config};
use lingan::corpus::SymbolSequence;
use lingan::fingerprint::{build_fingerprint, FINGERPRINT_CAPACITY, TILE_CELLS};
use lingan::gan::{self, init_params, ModelParams};
use lingan::metrics::{modified_cosine, rho};
use lingan::protocol::{compare_pair, distances, CompareConfig, PairResult};
use proptest::prelude::*;

fn slack(x: f64) -> f64 {
    x * (1.0 + 1e-12) + 1e-300
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn distance_bounds(xi in -1e3f64..1e3, nu in -1e3f64..1e3) {
        let d = distances(xi, nu);
        prop_assert!(d.d2_m <= d.d1_m);
        prop_assert!(d.d2 <= slack(2.0 * d.d1));
        prop_assert!(d.d1 >= 0.0 && d.d2 >= 0.0 && d.d2_m >= 0.0);
    }

    #[test]
    fn distances_are_homogeneous(xi in -10f64..10.0, nu in -10f64..10.0, k in -100f64..100.0) {
        let d = distances(xi, nu);
        let s = distances(k * xi, k * nu);
        let tol = |v: f64| 1e-12 * v.abs().max(1e-12);
        for (scaled, base) in [(s.d1, d.d1), (s.d2, d.d2), (s.d1_m, d.d1_m), (s.d2_m, d.d2_m)] {
            prop_assert!((scaled - k.abs() * base).abs() <= tol(k * base) + 1e-13, "{scaled} vs {}", k.abs() * base);
        }
    }

    #[test]
    fn pair_results_are_symmetric(xi in -5f64..5.0, nu in -5f64..5.0, s1: u64, s2: u64) {
        let r = PairResult::from_trials("a", "b", xi, nu, [s1, s2]);
        let w = r.swapped();
        prop_assert_eq!((w.xi, w.nu, w.seeds), (nu, xi, [s2, s1]));
        prop_assert_eq!((w.d1, w.d2, w.d1_m, w.d2_m), (r.d1, r.d2, r.d1_m, r.d2_m));
        prop_assert_eq!(w.swapped(), r);
    }

    #[test]
    fn rho_is_antisymmetric(a in 1e-6f64..10.0, b in 1e-6f64..10.0) {
        prop_assert_eq!(rho(a, b).unwrap(), -rho(b, a).unwrap());
        prop_assert_eq!(rho(a, a).unwrap(), 0.0);
    }

    #[test]
    fn shared_denominator_cancels(seed: u64, k in 0.01f64..100.0) {
        let train = random_tile("tr", seed);
        let test = random_tile("te", seed ^ 1);
        let fake = random_tile("f", seed ^ 2);
        let (c_tr, c_te) = modified_cosine(&train, &test, &fake).unwrap();
        // rescaling the test tile changes the denominator and the test inner product alike
        let scaled = lingan::fingerprint::Tile { values: test.values.iter().map(|v| v * k).collect(), ..test.clone() };
        let (s_tr, s_te) = modified_cosine(&train, &scaled, &fake).unwrap();
        prop_assert!((c_te - s_te).abs() <= 1e-12 * c_te.abs());
        prop_assert!((s_tr - c_tr / k).abs() <= 1e-12 * (c_tr / k).abs());
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let direct = (dot(&train.values, &fake.values) / dot(&test.values, &fake.values)).ln();
        prop_assert!((rho(c_tr, c_te).unwrap() - direct).abs() <= 1e-12);
    }

    #[test]
    fn fingerprint_conserves_mass(
        values in prop::collection::vec(1u32..2000, 1..(FINGERPRINT_CAPACITY + 600)),
        extra in 0u32..100,
    ) {
        let divisor = (values.iter().copied().max().unwrap() + extra) as f64;
        let seq = SymbolSequence { language_id: "t".into(), values: values.clone() };
        let set = build_fingerprint::<f64>(&seq, divisor).unwrap();
        let kept = values.len().min(FINGERPRINT_CAPACITY);
        prop_assert_eq!(set.truncated, values.len() - kept);
        prop_assert_eq!(set.tiles.iter().map(|t| t.fill_count).sum::<usize>(), kept);
        let mass: f64 = set.tiles.iter().map(|t| t.sum() * divisor).sum();
        let want: f64 = values[..kept].iter().map(|&v| v as f64).sum();
        prop_assert!((mass - want).abs() <= 1e-9 * want, "{mass} vs {want}");
        for t in &set.tiles {
            prop_assert!(t.values[t.fill_count..].iter().all(|v| *v == 0.0));
            prop_assert!(t.values.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(t.values.len(), TILE_CELLS);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn frozen_critic_keeps_its_weights(seed: u64, tile_seed: u64, epochs in 1usize..=3) {
        let config = tiny_config(epochs, seed);
        let out = gan::train(&config, &random_tile("t", tile_seed)).unwrap();
        let init: ModelParams<f64> = init_params(&config).unwrap();
        prop_assert!(out.params.critic == init.critic);
        prop_assert!(out.params.generator != init.generator);
    }

    #[test]
    fn pair_comparison_is_swap_invariant(seed: u64, ta: u64, tb: u64) {
        let fps = vec![single_tile_set(random_tile("a", ta)), single_tile_set(random_tile("b", tb))];
        let config = CompareConfig::new(tiny_config(1, seed));
        let ab = compare_pair("a", "b", &fps, &config).unwrap().result;
        let ba = compare_pair("b", "a", &fps, &config).unwrap().result;
        prop_assert_eq!(ab.swapped(), ba);
    }
}
