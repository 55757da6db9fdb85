//! Tape gradients against central finite differences.

mod common;

use common::{autoencoder_fd_error, random_graph, random_matrix, tape_vs_fd, weighted_sum};
use ggc::autodiff::Tape;
use ggc::gae::AutoencoderKind;
use ggc::gnn::GcnClassifier;
use ggc::qgnn::{QgnnKind, QuantumClassifier};
use ggc::{Edge, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-6;
/// Full autoencoder losses are large next to some of their gradients, so a
/// smaller step drowns the difference in cancellation error.
const LOSS_H: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn matmul_on_random_3x3() {
    let mut r = rng(1);
    for _ in 0..10 {
        let (a, b) = (random_matrix(&mut r, 3, 3), random_matrix(&mut r, 3, 3));
        let e = tape_vs_fd(&[a, b], |t, v| {
            let p = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, p)
        }, H);
        assert!(e < TOL, "{e}");
    }
}

#[test]
fn elementwise_primitives() {
    let mut r = rng(2);
    let a = random_matrix(&mut r, 3, 4);
    let b = random_matrix(&mut r, 3, 4);
    // Strictly positive input for log.
    let pos = a.map(|x| x.abs() + 0.2);
    type Build = fn(&mut Tape, &[ggc::autodiff::Var]) -> ggc::autodiff::Var;
    let unary: Vec<(&str, Build)> = vec![
        ("relu", |t, v| { let o = t.relu(v[0]); weighted_sum(t, o) }),
        ("tanh", |t, v| { let o = t.tanh(v[0]); weighted_sum(t, o) }),
        ("sigmoid", |t, v| { let o = t.sigmoid(v[0]); weighted_sum(t, o) }),
        ("square", |t, v| { let o = t.square(v[0]); weighted_sum(t, o) }),
        ("scalar_mul", |t, v| { let o = t.scalar_mul(v[0], -1.7); weighted_sum(t, o) }),
        ("affine", |t, v| { let o = t.affine(v[0], 0.5, 0.5); weighted_sum(t, o) }),
        ("clamp", |t, v| { let o = t.clamp(v[0], -0.5, 0.5); weighted_sum(t, o) }),
        ("mean_rows", |t, v| { let o = t.mean_rows(v[0]); weighted_sum(t, o) }),
        ("sum_rows", |t, v| { let o = t.sum_rows(v[0]); weighted_sum(t, o) }),
        ("mean", |t, v| t.mean(v[0])),
        ("sum", |t, v| t.sum(v[0])),
        ("select_rows", |t, v| { let o = t.select_rows(v[0], &[2, 0]).unwrap(); weighted_sum(t, o) }),
        ("scatter_rows", |t, v| { let o = t.scatter_rows(v[0], &[0, 2, 3], 5).unwrap(); weighted_sum(t, o) }),
    ];
    for (name, f) in unary {
        let e = tape_vs_fd(std::slice::from_ref(&a), f, H);
        assert!(e < TOL, "{name}: {e}");
    }
    let e = tape_vs_fd(&[pos], |t, v| { let o = t.log(v[0]); weighted_sum(t, o) }, H);
    assert!(e < TOL, "log: {e}");

    let binary: Vec<(&str, Build)> = vec![
        ("add", |t, v| { let o = t.add(v[0], v[1]).unwrap(); weighted_sum(t, o) }),
        ("sub", |t, v| { let o = t.sub(v[0], v[1]).unwrap(); weighted_sum(t, o) }),
        ("mul", |t, v| { let o = t.mul(v[0], v[1]).unwrap(); weighted_sum(t, o) }),
    ];
    for (name, f) in binary {
        let e = tape_vs_fd(&[a.clone(), b.clone()], f, H);
        assert!(e < TOL, "{name}: {e}");
    }
}

#[test]
fn row_broadcast_and_gating() {
    let mut r = rng(3);
    let (a, bias, gate) = (random_matrix(&mut r, 4, 3), random_matrix(&mut r, 1, 3), random_matrix(&mut r, 4, 1));
    let e = tape_vs_fd(&[a.clone(), bias], |t, v| { let o = t.add_row(v[0], v[1]).unwrap(); weighted_sum(t, o) }, H);
    assert!(e < TOL, "add_row: {e}");
    let e = tape_vs_fd(&[a, gate], |t, v| { let o = t.mul_column(v[0], v[1]).unwrap(); weighted_sum(t, o) }, H);
    assert!(e < TOL, "mul_column: {e}");
}

#[test]
fn stack_and_bce() {
    let e = tape_vs_fd(&[Matrix::scalar(0.3), Matrix::scalar(0.8), Matrix::scalar(0.55)], |t, v| {
        let s = t.stack(v).unwrap();
        t.bce(s, &[1.0, 0.0, 1.0]).unwrap()
    }, H);
    assert!(e < TOL, "bce: {e}");
}

#[test]
fn graph_aggregations() {
    let mut r = rng(4);
    for _ in 0..10 {
        let n = r.gen_range(1..8);
        let g = random_graph(&mut r, n, 3, 0.5);
        let edges = g.edges.clone();
        let e1 = tape_vs_fd(std::slice::from_ref(&g.features), |t, v| {
            let o = t.neighborhood_mean(v[0], &edges).unwrap();
            weighted_sum(t, o)
        }, H);
        let e2 = tape_vs_fd(std::slice::from_ref(&g.features), |t, v| {
            let o = t.degree_normalized_aggregate(v[0], &edges).unwrap();
            weighted_sum(t, o)
        }, H);
        assert!(e1 < TOL && e2 < TOL, "{e1} {e2}");
    }
}

#[test]
fn full_miagae_loss() {
    for seed in 0..10 {
        let e = autoencoder_fd_error(AutoencoderKind::Miagae, seed, LOSS_H);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn full_sag_loss() {
    for seed in 0..10 {
        let e = autoencoder_fd_error(AutoencoderKind::Sag, 100 + seed, LOSS_H);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn gcn_parameters_and_inputs() {
    let mut r = rng(5);
    for _ in 0..5 {
        let n = r.gen_range(1..7);
        let g = random_graph(&mut r, n, 3, 0.5);
        let m = GcnClassifier::new(3, 5, &mut r);
        let edges = g.edges.clone();
        let mut inputs = vec![g.features.clone()];
        inputs.extend(m.params.values().iter().cloned());
        let e = tape_vs_fd(&inputs, |t, v| m.forward_on(t, &v[1..], v[0], &edges).unwrap(), H);
        assert!(e < TOL, "{e}");
    }
}

fn quantum_check(kind: QgnnKind, seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..5);
    let g = random_graph(&mut r, n, 2, 0.7);
    let m = QuantumClassifier::new(kind, r.gen_range(1..4), 2, &mut r);
    let edges: Vec<Edge> = g.edges.clone();
    let mut inputs = vec![g.features.clone()];
    inputs.extend(m.params.values().iter().cloned());
    tape_vs_fd(&inputs, |t, v| m.forward_on(t, &v[1..], v[0], &edges).unwrap(), 1e-5)
}

#[test]
fn quantum_node_through_the_tape() {
    for seed in 0..10 {
        for kind in [QgnnKind::Qgnn1, QgnnKind::Qgnn2] {
            let e = quantum_check(kind, seed);
            assert!(e < 1e-7, "{kind:?} seed {seed}: {e}");
        }
    }
}
