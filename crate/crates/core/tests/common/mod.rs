#![allow(dead_code)]

pub mod dense;
pub mod golden;

use ggc::autodiff::{Tape, Var};
use ggc::gae::{AutoencoderKind, EncoderConfig, GraphAutoencoder};
use ggc::{Edge, Graph, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Symmetric random graph: each pair is linked with probability `density`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, d: usize, density: f64) -> Graph {
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                pairs.push((i, j, rng.gen_range(0.05..1.5)));
            }
        }
    }
    Graph::from_undirected(x, &pairs, rng.gen_range(0..2))
}

pub fn random_perm<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute gap when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Reduces any tape value to a scalar with fixed pseudo-random weights so
/// every output entry gets a distinct upstream gradient.
pub fn weighted_sum(tape: &mut Tape, v: Var) -> Var {
    let (r, c) = tape.value(v).shape();
    let w = Matrix::from_vec(r, c, (0..r * c).map(|k| ((k * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect());
    let w = tape.constant(w);
    let p = tape.mul(v, w).unwrap();
    tape.sum(p)
}

/// Analytic gradient of `build` against central differences, over all inputs.
pub fn tape_vs_fd<F>(inputs: &[Matrix], build: F, h: f64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |vals: &[Matrix]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = vals.iter().map(|m| t.param(m.clone())).collect();
        let out = build(&mut t, &vs);
        t.value(out).item()
    };
    let mut t = Tape::new();
    let vs: Vec<Var> = inputs.iter().map(|m| t.param(m.clone())).collect();
    let out = build(&mut t, &vs);
    let grads = t.backward(out).unwrap();
    let analytic: Vec<f64> = vs.iter().flat_map(|&v| grads.get(v).into_vec()).collect();

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut vals = inputs.to_vec();
    for i in 0..vals.len() {
        for k in 0..vals[i].len() {
            let x0 = vals[i].as_slice()[k];
            vals[i].as_mut_slice()[k] = x0 + h;
            let plus = eval(&vals);
            vals[i].as_mut_slice()[k] = x0 - h;
            let minus = eval(&vals);
            vals[i].as_mut_slice()[k] = x0;
            numeric.push((plus - minus) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric)
}

/// Proptest strategy: graphs with 1..=max_n nodes, `d` features, random symmetric edges.
pub fn arb_graph(max_n: usize, d: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(move |n| {
        let pairs = n * (n - 1) / 2;
        (
            prop::collection::vec(-1.0f64..1.0, n * d),
            prop::collection::vec(prop::option::of(0.05f64..1.5), pairs),
            0u8..2,
        )
            .prop_map(move |(x, w, label)| {
                let mut und = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if let Some(w) = w[k] {
                            und.push((i, j, w));
                        }
                        k += 1;
                    }
                }
                Graph::from_undirected(Matrix::from_vec(n, d, x), &und, label)
            })
    })
}

/// A graph together with a node permutation of matching size.
pub fn arb_graph_and_perm(max_n: usize, d: usize) -> impl Strategy<Value = (Graph, Vec<usize>)> {
    arb_graph(max_n, d).prop_flat_map(|g| {
        let n = g.num_nodes();
        (Just(g), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
    })
}

pub fn edge_set(edges: &[Edge]) -> Vec<(usize, usize, u64)> {
    let mut v: Vec<_> = edges.iter().map(|e| (e.src, e.dst, e.weight.to_bits())).collect();
    v.sort_unstable();
    v
}

/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)` over all positive/negative pairs.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn ae_loss(ae: &GraphAutoencoder, g: &Graph) -> f64 {
    let mut t = Tape::new();
    let p = ae.params.bind_frozen(&mut t);
    let (_, l) = ae.forward_on(&mut t, &p, g).unwrap();
    t.value(l).item()
}

/// Full autoencoder loss on a random graph at random parameters drawn from
/// U(-1, 1): 20 randomly chosen parameter entries, tape gradient against
/// central differences with step `h`.
///
/// The small-scale initialisation is avoided on purpose: SAG gates shrink
/// the latent towards zero there, the gradient drops to ~1e-8 and the
/// difference quotient is dominated by rounding in the loss.
pub fn autoencoder_fd_error(kind: AutoencoderKind, seed: u64, h: f64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.gen_range(4..12);
    let g = random_graph(&mut r, n, 4, 0.6);
    let cfg = EncoderConfig { depth: 2, shapes: vec![3, 2], compression_rate: 0.5, kernels: r.gen_range(1..3) };
    let mut ae = GraphAutoencoder::new(kind, 4, cfg, &mut r).unwrap();
    for slot in 0..ae.params.len() {
        ae.params.get_mut(slot).as_mut_slice().iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    }

    let mut t = Tape::new();
    let p = ae.params.bind(&mut t);
    let (_, loss) = ae.forward_on(&mut t, &p, &g).unwrap();
    let grads = t.backward(loss).unwrap().collect(&t, &p);

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for _ in 0..20 {
        let slot = r.gen_range(0..ae.params.len());
        let k = r.gen_range(0..ae.params.get(slot).len());
        let x0 = ae.params.get(slot).as_slice()[k];
        ae.params.get_mut(slot).as_mut_slice()[k] = x0 + h;
        let plus = ae_loss(&ae, &g);
        ae.params.get_mut(slot).as_mut_slice()[k] = x0 - h;
        let minus = ae_loss(&ae, &g);
        ae.params.get_mut(slot).as_mut_slice()[k] = x0;
        analytic.push(grads[slot].as_slice()[k]);
        numeric.push((plus - minus) / (2.0 * h));
    }
    rel_err(&analytic, &numeric)
}
