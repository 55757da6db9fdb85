//! Baseline classical classifier: one normalised graph convolution, mean
//! pooling over nodes and a logistic readout.

use rand::Rng;

use crate::autodiff::{bce_value, sigmoid, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::qgnn::PROB_EPS;
use crate::tensor::Matrix;

pub const DEFAULT_HIDDEN: usize = 32;

const CONV: usize = 0;
const OUT: usize = 1;
const BIAS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GcnClassifier {
    pub d_in: usize,
    pub hidden: usize,
    /// `conv` (`d_in × hidden`), `out` (`hidden × 1`), `bias` (`1 × 1`).
    pub params: ParamStore,
}

impl GcnClassifier {
    pub fn new<R: Rng + ?Sized>(d_in: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = ParamStore::new();
        params.insert("gcn.conv", Matrix::uniform(d_in, hidden, 1.0 / (d_in as f64).sqrt(), rng));
        let bound = 1.0 / (hidden as f64).sqrt();
        params.insert("gcn.out", Matrix::uniform(hidden, 1, bound, rng));
        params.insert("gcn.bias", Matrix::uniform(1, 1, bound, rng));
        Self { d_in, hidden, params }
    }

    /// `sigmoid(mean_nodes(ReLU(Â X W)) · w_out + b)` as a `1 × 1` node.
    pub fn forward_on(&self, tape: &mut Tape, params: &[Var], x: Var, edges: &[Edge]) -> Result<Var> {
        let (n, d) = tape.value(x).shape();
        if d != self.d_in {
            return Err(Error::ShapeMismatch { op: "gcn", left: (n, d), right: (self.d_in, self.hidden) });
        }
        let agg = tape.degree_normalized_aggregate(x, edges)?;
        let h = tape.matmul(agg, params[CONV])?;
        let h = tape.relu(h);
        let pooled = tape.mean_rows(h);
        let logit = tape.matmul(pooled, params[OUT])?;
        let logit = tape.add(logit, params[BIAS])?;
        Ok(tape.sigmoid(logit))
    }

    pub fn predict(&self, g: &Graph) -> Result<f64> {
        let mut tape = Tape::new();
        let params = self.params.bind_frozen(&mut tape);
        let x = tape.constant(g.features.clone());
        let p = self.forward_on(&mut tape, &params, x, &g.edges)?;
        Ok(tape.value(p).item())
    }
}

/// Probability that `g` is in class 1.
pub fn gcn_forward(g: &Graph, model: &GcnClassifier) -> Result<f64> {
    model.predict(g)
}

/// Mean binary cross-entropy after clamping probabilities to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> f64 {
    let clamped: Vec<f64> = probs.iter().map(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS)).collect();
    bce_value(&clamped, labels)
}

/// Reference logistic for tests and callers that skip the tape.
pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
}
