//! Equivariant quantum graph classifiers: one qubit per node, edge weights
//! embedded by `RZZ` gates, node features by `RX` gates, layers repeated on
//! the same data (re-uploading). The readout is `⟨Z⟩` on qubit 0.
//!
//! * QGNN1 starts in `|+⟩^⊗n`; layer `l` applies `RZZ(β_l·e_ij)` on every
//!   edge then `RX(α_l·x̄_m)` with `x̄_m` the mean of node `m`'s features.
//! * QGNN2 starts in `|0⟩^⊗n`; layer `l` applies `RX(Σ_k α_{l,k} x_{m,k})`
//!   (the composed form of one `RX` per feature) then `RZZ(e_ij + β_l)`.
//!
//! Edge gates within a layer run in ascending `(i, j)` order. They are all
//! diagonal so the order does not change the state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::qsim::{self, Circuit, GateOp, Source, StateVector, MAX_QUBITS};
use crate::tensor::Matrix;

/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before the cross-entropy.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QgnnKind {
    Qgnn1,
    Qgnn2,
}

impl QgnnKind {
    pub fn num_params(self, layers: usize, feature_dim: usize) -> usize {
        match self {
            QgnnKind::Qgnn1 => 2 * layers,
            QgnnKind::Qgnn2 => layers * (feature_dim + 1),
        }
    }
}

/// Trainable angles. `alpha` is `1 × L` for QGNN1 and `L × d` for QGNN2; `beta` is `1 × L`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumClassifier {
    pub kind: QgnnKind,
    pub layers: usize,
    pub feature_dim: usize,
    pub params: ParamStore,
}

const ALPHA: usize = 0;
const BETA: usize = 1;

impl QuantumClassifier {
    pub fn new<R: Rng + ?Sized>(kind: QgnnKind, layers: usize, feature_dim: usize, rng: &mut R) -> Self {
        let alpha = match kind {
            QgnnKind::Qgnn1 => Matrix::uniform(1, layers, 1.0, rng),
            QgnnKind::Qgnn2 => Matrix::uniform(layers, feature_dim, 1.0, rng),
        };
        let beta = Matrix::uniform(1, layers, 1.0, rng);
        Self::from_angles(kind, feature_dim, alpha, beta)
    }

    pub fn from_angles(kind: QgnnKind, feature_dim: usize, alpha: Matrix, beta: Matrix) -> Self {
        let layers = beta.cols();
        let mut params = ParamStore::new();
        params.insert("qgnn.alpha", alpha);
        params.insert("qgnn.beta", beta);
        let model = Self { kind, layers, feature_dim, params };
        assert_eq!(
            model.params.num_scalars(),
            kind.num_params(layers, feature_dim),
            "parameter count does not match the ansatz"
        );
        model
    }

    pub fn num_params(&self) -> usize {
        self.kind.num_params(self.layers, self.feature_dim)
    }

    /// Builds the circuit with gate provenance pointing at flat parameter
    /// indices (alpha entries first, then beta) and node features.
    pub fn circuit(&self, features: &Matrix, edges: &[Edge]) -> Result<Circuit> {
        let (alpha, beta) = (self.params.get(ALPHA), self.params.get(BETA));
        build_circuit(self.kind, self.layers, features, edges, alpha.as_slice(), beta.as_slice())
    }

    /// `⟨Z_q⟩` for every qubit.
    pub fn expectations(&self, g: &Graph) -> Result<Vec<f64>> {
        let c = self.circuit(&g.features, &g.edges)?;
        let state = c.run(&StateVector::zero(c.num_qubits)?)?;
        Ok(qsim::expect_z_all(&state))
    }

    /// Score `f = ⟨Z_0⟩`, clamped probability `(f + 1)/2` and hard label.
    pub fn classify(&self, g: &Graph) -> Result<Prediction> {
        let c = self.circuit(&g.features, &g.edges)?;
        let state = c.run(&StateVector::zero(c.num_qubits)?)?;
        Ok(Prediction::from_score(qsim::expect_z(&state, 0)))
    }

    /// Records `f = ⟨Z_0⟩` as a `1 × 1` node depending on the features and both angle tensors.
    pub fn forward_on(&self, tape: &mut Tape, params: &[Var], x: Var, edges: &[Edge]) -> Result<Var> {
        let features = tape.value(x).clone();
        let (n, d) = features.shape();
        if d != self.feature_dim {
            return Err(Error::ShapeMismatch { op: "qgnn", left: (n, d), right: (n, self.feature_dim) });
        }
        let (alpha, beta) = (tape.value(params[ALPHA]).clone(), tape.value(params[BETA]).clone());
        let circuit = build_circuit(self.kind, self.layers, &features, edges, alpha.as_slice(), beta.as_slice())?;
        let state0 = StateVector::zero(n)?;
        let f = qsim::expect_z(&circuit.run(&state0)?, 0);
        let n_alpha = alpha.len();
        let (a_shape, b_shape) = (alpha.shape(), beta.shape());
        let num_params = self.num_params();
        Ok(tape.custom(&[x, params[ALPHA], params[BETA]], Matrix::scalar(f), move |g| {
            let up = g.item();
            let angle_grads = qsim::adjoint_gradients(&circuit, &state0, 0).expect("circuit already validated");
            let (dp, dx) = qsim::chain_gradients(&circuit, &angle_grads, num_params, n, d);
            let scale = |v: &[f64]| v.iter().map(|x| x * up).collect::<Vec<_>>();
            vec![
                Matrix::from_vec(n, d, scale(&dx)),
                Matrix::from_vec(a_shape.0, a_shape.1, scale(&dp[..n_alpha])),
                Matrix::from_vec(b_shape.0, b_shape.1, scale(&dp[n_alpha..])),
            ]
        }))
    }
}

/// Classifier output for one graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub probability: f64,
    pub label: u8,
}

impl Prediction {
    pub fn from_score(f: f64) -> Self {
        Self { score: f, probability: score_to_probability(f), label: hard_label(f) }
    }
}

/// `(f + 1)/2` clamped away from 0 and 1.
pub fn score_to_probability(f: f64) -> f64 {
    ((f + 1.0) / 2.0).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `(sign(f) + 1)/2` with `sign(0) = 1`.
pub fn hard_label(f: f64) -> u8 {
    u8::from(f >= 0.0)
}

fn build_circuit(
    kind: QgnnKind,
    layers: usize,
    features: &Matrix,
    edges: &[Edge],
    alpha: &[f64],
    beta: &[f64],
) -> Result<Circuit> {
    let (n, d) = features.shape();
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    let mut pairs: Vec<(usize, usize, f64)> = edges.iter().filter(|e| e.src < e.dst).map(|e| (e.src, e.dst, e.weight)).collect();
    pairs.sort_by_key(|p| (p.0, p.1));
    let mut c = Circuit::new(n);
    match kind {
        QgnnKind::Qgnn1 => {
            let means = features.row_means();
            for q in 0..n {
                c.push(GateOp::h(q));
            }
            let beta_base = layers;
            for l in 0..layers {
                let (a, b) = (alpha[l], beta[l]);
                for &(i, j, w) in &pairs {
                    c.push(GateOp::rzz(i, j, b * w).with_provenance(vec![(Source::Param(beta_base + l), w)]));
                }
                for (m, &xm) in means.iter().enumerate() {
                    let mut prov = vec![(Source::Param(l), xm)];
                    prov.extend((0..d).map(|k| (Source::Feature(m, k), a / d as f64)));
                    c.push(GateOp::rx(m, a * xm).with_provenance(prov));
                }
            }
        }
        QgnnKind::Qgnn2 => {
            let beta_base = layers * d;
            for l in 0..layers {
                let al = &alpha[l * d..(l + 1) * d];
                for m in 0..n {
                    let x = features.row(m);
                    let angle: f64 = al.iter().zip(x).map(|(a, x)| a * x).sum();
                    let mut prov: Vec<(Source, f64)> = (0..d).map(|k| (Source::Param(l * d + k), x[k])).collect();
                    prov.extend((0..d).map(|k| (Source::Feature(m, k), al[k])));
                    c.push(GateOp::rx(m, angle).with_provenance(prov));
                }
                for &(i, j, w) in &pairs {
                    c.push(GateOp::rzz(i, j, w + beta[l]).with_provenance(vec![(Source::Param(beta_base + l), 1.0)]));
                }
            }
        }
    }
    Ok(c)
}
