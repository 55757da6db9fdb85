//! Relabelling nodes must relabel every node-level output the same way and
//! leave graph-level outputs alone.

mod common;

use common::{arb_graph, arb_graph_and_perm};
use ggc::gae::{mi_conv_forward, rcs_scores, sag_scores, select_top, AutoencoderKind, EncoderConfig, GraphAutoencoder};
use ggc::gnn::GcnClassifier;
use ggc::qgnn::{QgnnKind, QuantumClassifier};
use ggc::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

/// `out[perm[i]]` against `base[i]` for per-node values.
fn permuted_gap(base: &[f64], out: &[f64], perm: &[usize], width: usize) -> f64 {
    let mut gap: f64 = 0.0;
    for (i, &p) in perm.iter().enumerate() {
        for k in 0..width {
            gap = gap.max((base[i * width + k] - out[p * width + k]).abs());
        }
    }
    gap
}

fn kernels(seed: u64, d_in: usize, d_out: usize, m: usize) -> Vec<(Matrix, Matrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| (Matrix::uniform(d_in, d_out, 1.0, &mut rng), Matrix::uniform(d_in, d_out, 1.0, &mut rng))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mi_conv_is_equivariant((g, perm) in arb_graph_and_perm(8, 3), seed in 0u64..1000, m in 1usize..3) {
        let k = kernels(seed, 3, 4, m);
        let base = mi_conv_forward(&g.features, &g.edges, &k).unwrap();
        let gp = g.permuted(&perm);
        let out = mi_conv_forward(&gp.features, &gp.edges, &k).unwrap();
        prop_assert!(permuted_gap(base.as_slice(), out.as_slice(), &perm, 4) < TOL);
    }

    #[test]
    fn rcs_is_equivariant((g, perm) in arb_graph_and_perm(8, 3)) {
        let gp = g.permuted(&perm);
        prop_assert!(permuted_gap(&rcs_scores(&g.features, &g.edges), &rcs_scores(&gp.features, &gp.edges), &perm, 1) < TOL);
    }

    #[test]
    fn sag_scores_are_equivariant((g, perm) in arb_graph_and_perm(8, 3), seed in 0u64..1000) {
        let theta = Matrix::uniform(3, 1, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let gp = g.permuted(&perm);
        let a = sag_scores(&g.features, &g.edges, &theta).unwrap();
        let b = sag_scores(&gp.features, &gp.edges, &theta).unwrap();
        prop_assert!(permuted_gap(&a, &b, &perm, 1) < TOL);
    }

    #[test]
    fn gcn_is_invariant((g, perm) in arb_graph_and_perm(8, 3), seed in 0u64..1000) {
        let m = GcnClassifier::new(3, 8, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = m.predict(&g).unwrap();
        let b = m.predict(&g.permuted(&perm)).unwrap();
        prop_assert!((a - b).abs() < TOL);
    }

    #[test]
    fn qgnn_readouts_follow_the_permutation((g, perm) in arb_graph_and_perm(8, 2), seed in 0u64..1000, layers in 1usize..4) {
        for kind in [QgnnKind::Qgnn1, QgnnKind::Qgnn2] {
            let m = QuantumClassifier::new(kind, layers, 2, &mut ChaCha8Rng::seed_from_u64(seed));
            let a = m.expectations(&g).unwrap();
            let b = m.expectations(&g.permuted(&perm)).unwrap();
            prop_assert!(permuted_gap(&a, &b, &perm, 1) < TOL, "{:?}", kind);
        }
    }

    #[test]
    fn top_p_keeps_sorted_unique_indices(scores in prop::collection::vec(-5.0f64..5.0, 1..40), p in 0.05f64..1.0) {
        let kept = select_top(&scores, p);
        prop_assert!(!kept.is_empty());
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        let cutoff = kept.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        prop_assert!((0..scores.len()).filter(|i| !kept.contains(i)).all(|i| scores[i] <= cutoff));
    }

    #[test]
    fn encoder_output_respects_cascade(g in arb_graph(30, 3), seed in 0u64..100) {
        for kind in [AutoencoderKind::Miagae, AutoencoderKind::Sag] {
            let cfg = EncoderConfig { depth: 3, shapes: vec![3, 3, 2], compression_rate: 0.4, kernels: 1 };
            let ae = GraphAutoencoder::new(kind, 3, cfg.clone(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let c = ae.encode(&g).unwrap();
            prop_assert_eq!(c.graph.num_nodes(), *cfg.cascade(g.num_nodes()).last().unwrap());
            prop_assert_eq!(c.graph.feature_dim(), 2);
            let r = ae.decode(&c).unwrap();
            prop_assert_eq!(r.shape(), g.features.shape());
        }
    }
}
