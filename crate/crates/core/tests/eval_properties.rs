mod common;

use common::pairwise_auc;
use ggc::eval::{kfold_test, roc_auc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_class() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec((0..20u8).prop_map(|k| f64::from(k) / 4.0), n),
            prop::collection::vec(0u8..2, n),
        )
            .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
    })
}

fn tie_free() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    two_class().prop_map(|(s, y)| {
        let s = s.iter().enumerate().map(|(i, v)| v + i as f64 * 1e-6).collect();
        (s, y)
    })
}

#[test]
fn thirty_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let s: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut y: Vec<u8> = (0..30).map(|_| rng.gen_range(0..2)).collect();
        y[0] = 0;
        y[1] = 1;
        assert!((roc_auc(&s, &y).unwrap().auc - pairwise_auc(&s, &y)).abs() < 1e-12);
    }
}

#[test]
fn uninformative_scores_sit_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let s: Vec<f64> = (0..20_000).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<u8> = (0..20_000).map(|_| rng.gen_range(0..2)).collect();
    assert!((roc_auc(&s, &y).unwrap().auc - 0.5).abs() < 0.02);
}

#[test]
fn symmetric_folds_have_no_spread() {
    // Every fold sees the same perfectly ranked pattern.
    let s: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
    let y: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
    let r = kfold_test(&s, &y, 5, 42).unwrap();
    assert_eq!(r.mean, 1.0);
    assert!(r.std.abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_pairwise_oracle((s, y) in two_class()) {
        prop_assert!((roc_auc(&s, &y).unwrap().auc - pairwise_auc(&s, &y)).abs() < 1e-12);
    }

    #[test]
    fn curve_is_monotone_from_origin_to_corner((s, y) in two_class()) {
        let c = roc_auc(&s, &y).unwrap();
        prop_assert_eq!(c.points[0], (0.0, 0.0));
        prop_assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
        prop_assert!(c.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        prop_assert!((0.0..=1.0).contains(&c.auc));
    }

    #[test]
    fn invariant_under_monotone_maps((s, y) in two_class(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let base = roc_auc(&s, &y).unwrap().auc;
        let affine: Vec<f64> = s.iter().map(|v| a * v + b).collect();
        let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        prop_assert!((roc_auc(&affine, &y).unwrap().auc - base).abs() < 1e-12);
        prop_assert!((roc_auc(&exp, &y).unwrap().auc - base).abs() < 1e-12);
    }

    #[test]
    fn negation_complements((s, y) in tie_free()) {
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let (a, b) = (roc_auc(&s, &y).unwrap().auc, roc_auc(&neg, &y).unwrap().auc);
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fold_sizes_cover_the_set(n in 5usize..200, k in 1usize..6, seed in 0u64..100) {
        let s: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        if let Ok(r) = kfold_test(&s, &y, k, seed) {
            prop_assert_eq!(r.fold_sizes.iter().sum::<usize>(), n);
            let (lo, hi) = (r.fold_sizes.iter().min().unwrap(), r.fold_sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert_eq!(r, kfold_test(&s, &y, k, seed).unwrap());
        }
    }
}
