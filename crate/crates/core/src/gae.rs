//! Graph autoencoders that compress node count and feature width together.
//!
//! Both models share the same skeleton: each encoder layer is a multi-kernel
//! inductive convolution followed by top-`p` node pooling, and the decoder
//! mirrors it with unpooling followed by convolution. They differ only in
//! the pooling score:
//!
//! * MIAGAE ranks nodes by the representativeness/contribution score
//!   `RCS_i = Σ_{j∈N(i)} f_iᵀ f_j` and passes kept features through untouched.
//! * The SAG model ranks by `tanh(D̃^{-1/2} Ã D̃^{-1/2} X Θ)` and gates kept
//!   features by that score, which is what lets `Θ` learn.
//!
//! Dropped nodes come back as zero rows in the decoder; the next convolution
//! refills them from their restored neighbours.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{induced_edges, restore_edges, CompressedGraph, Edge, Graph, PoolStep};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoencoderKind {
    Miagae,
    Sag,
}

impl AutoencoderKind {
    pub fn label(self) -> &'static str {
        match self {
            AutoencoderKind::Miagae => "MIAGAE",
            AutoencoderKind::Sag => "SAG model",
        }
    }
}

impl std::str::FromStr for AutoencoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "miagae" => Ok(Self::Miagae),
            "sag" => Ok(Self::Sag),
            other => Err(format!("unknown autoencoder kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub depth: usize,
    /// Output feature width of each encoder layer; reversed by the decoder.
    pub shapes: Vec<usize>,
    pub compression_rate: f64,
    pub kernels: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { depth: 3, shapes: vec![13, 13, 2], compression_rate: 0.4, kernels: 1 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.depth == 0 {
            out.push("encoder.depth must be at least 1".into());
        }
        if self.shapes.len() != self.depth {
            out.push(format!("encoder.shapes has {} entries, depth is {}", self.shapes.len(), self.depth));
        }
        if self.shapes.contains(&0) {
            out.push("encoder.shapes entries must be positive".into());
        }
        if !(self.compression_rate > 0.0 && self.compression_rate <= 1.0) {
            out.push(format!("encoder.compression_rate {} outside (0, 1]", self.compression_rate));
        }
        if self.kernels == 0 {
            out.push("encoder.kernels must be at least 1".into());
        }
        out
    }

    /// Node counts after each pooling layer for an `n`-node input.
    pub fn cascade(&self, n: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.depth);
        let mut cur = n;
        for _ in 0..self.depth {
            cur = pool_size(cur, self.compression_rate);
            sizes.push(cur);
        }
        sizes
    }
}

/// `ceil(p·n)`, at least 1.
pub fn pool_size(n: usize, p: f64) -> usize {
    // The epsilon keeps e.g. 0.4 * 25 = 10.000000000000002 from rounding up to 11.
    ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// One multi-kernel inductive convolution layer: parameter slots of its
/// `(W_1^m, W_2^m)` pairs, each `d_in × d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiConvLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub kernels: Vec<(usize, usize)>,
    /// ReLU per kernel before the sum. Off only for the final decoder layer.
    pub relu: bool,
}

impl MiConvLayer {
    fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        kernels: usize,
        relu: bool,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let kernels = (0..kernels)
            .map(|m| {
                let w1 = store.insert(format!("{prefix}.k{m}.w1"), Matrix::uniform(d_in, d_out, bound, rng));
                let w2 = store.insert(format!("{prefix}.k{m}.w2"), Matrix::uniform(d_in, d_out, bound, rng));
                (w1, w2)
            })
            .collect();
        Self { d_in, d_out, kernels, relu }
    }

    /// `f'_i = Σ_m σ(W_1^m f_i + W_2^m · mean_{j∈N(i)} f_j)`.
    pub fn forward_on(&self, tape: &mut Tape, params: &[Var], x: Var, edges: &[Edge]) -> Result<Var> {
        let (n, d) = tape.value(x).shape();
        if d != self.d_in {
            return Err(Error::ShapeMismatch { op: "mi_conv", left: (n, d), right: (self.d_in, self.d_out) });
        }
        let agg = tape.neighborhood_mean(x, edges)?;
        let mut out: Option<Var> = None;
        for &(w1, w2) in &self.kernels {
            let a = tape.matmul(x, params[w1])?;
            let b = tape.matmul(agg, params[w2])?;
            let mut h = tape.add(a, b)?;
            if self.relu {
                h = tape.relu(h);
            }
            out = Some(match out {
                None => h,
                Some(acc) => tape.add(acc, h)?,
            });
        }
        Ok(out.expect("at least one kernel"))
    }
}

/// MI-Conv on plain matrices with explicit `(W_1, W_2)` kernels and ReLU.
pub fn mi_conv_forward(features: &Matrix, edges: &[Edge], kernels: &[(Matrix, Matrix)]) -> Result<Matrix> {
    let first = kernels.first().ok_or_else(|| Error::InvalidSelection("no kernels".into()))?;
    let (d_in, d_out) = first.0.shape();
    let mut tape = Tape::new();
    let mut params = Vec::new();
    let mut slots = Vec::new();
    for (w1, w2) in kernels {
        if w1.shape() != (d_in, d_out) || w2.shape() != (d_in, d_out) {
            return Err(Error::ShapeMismatch { op: "mi_conv kernels", left: w1.shape(), right: w2.shape() });
        }
        params.push(tape.constant(w1.clone()));
        params.push(tape.constant(w2.clone()));
        slots.push((params.len() - 2, params.len() - 1));
    }
    let layer = MiConvLayer { d_in, d_out, kernels: slots, relu: true };
    let x = tape.constant(features.clone());
    let y = layer.forward_on(&mut tape, &params, x, edges)?;
    Ok(tape.value(y).clone())
}

/// `RCS_i = Σ_{j∈N(i)} f_iᵀ f_j`; isolated nodes score 0.
pub fn rcs_scores(features: &Matrix, edges: &[Edge]) -> Vec<f64> {
    let mut scores = vec![0.0; features.rows()];
    for e in edges {
        scores[e.src] += features.row(e.src).iter().zip(features.row(e.dst)).map(|(a, b)| a * b).sum::<f64>();
    }
    scores
}

/// `tanh(D̃^{-1/2} Ã D̃^{-1/2} X Θ)` with `Ã = A + I`, one score per node.
pub fn sag_scores(features: &Matrix, edges: &[Edge], theta: &Matrix) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let t = tape.constant(theta.clone());
    let z = sag_scores_on(&mut tape, x, edges, t)?;
    Ok(tape.value(z).as_slice().to_vec())
}

fn sag_scores_on(tape: &mut Tape, x: Var, edges: &[Edge], theta: Var) -> Result<Var> {
    let agg = tape.degree_normalized_aggregate(x, edges)?;
    let proj = tape.matmul(agg, theta)?;
    Ok(tape.tanh(proj))
}

/// Indices of the `k = ceil(p·N)` highest scores, returned ascending.
/// Ties go to the lower index.
pub fn select_top(scores: &[f64], p: f64) -> Vec<usize> {
    let k = pool_size(scores.len(), p);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept = order[..k.min(order.len())].to_vec();
    kept.sort_unstable();
    kept
}

/// One pooling step on a concrete graph. With `gate`, kept rows are scaled by their score.
pub fn top_p_pool(g: &Graph, scores: &[f64], p: f64, gate: bool) -> Result<(Graph, PoolStep)> {
    if scores.len() != g.num_nodes() {
        return Err(Error::ShapeMismatch { op: "top_p_pool", left: (scores.len(), 1), right: (g.num_nodes(), 1) });
    }
    let kept = select_top(scores, p);
    let (mut sub, step) = crate::graph::induced_subgraph(g, &kept)?;
    if gate {
        for (row, &orig) in kept.iter().enumerate() {
            let s = scores[orig];
            sub.features.row_mut(row).iter_mut().for_each(|x| *x *= s);
        }
    }
    Ok((sub, step))
}

/// Mean over entries of `(a − b)²` per graph, then mean over graphs.
pub fn reconstruction_loss(originals: &[&Matrix], reconstructions: &[&Matrix]) -> Result<f64> {
    if originals.len() != reconstructions.len() || originals.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "reconstruction_loss",
            left: (originals.len(), 1),
            right: (reconstructions.len(), 1),
        });
    }
    let mut total = 0.0;
    for (x, r) in originals.iter().zip(reconstructions) {
        if x.shape() != r.shape() {
            return Err(Error::ShapeMismatch { op: "reconstruction_loss", left: x.shape(), right: r.shape() });
        }
        total += x.zip_map(r, |a, b| (a - b) * (a - b)).sum() / x.len() as f64;
    }
    Ok(total / originals.len() as f64)
}

/// Tape form of the per-graph term of [`reconstruction_loss`].
pub fn mse_on(tape: &mut Tape, recon: Var, original: Var) -> Result<Var> {
    let d = tape.sub(recon, original)?;
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

/// What the encoder leaves on the tape.
pub struct EncoderPass {
    pub latent: Var,
    pub latent_edges: Vec<Edge>,
    pub steps: Vec<PoolStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphAutoencoder {
    pub kind: AutoencoderKind,
    pub config: EncoderConfig,
    pub input_dim: usize,
    pub params: ParamStore,
    pub encoder: Vec<MiConvLayer>,
    pub decoder: Vec<MiConvLayer>,
    /// SAG attention vectors `Θ` (`d_k × 1`) per encoder layer; empty for MIAGAE.
    pub attention: Vec<usize>,
}

impl GraphAutoencoder {
    pub fn new<R: Rng + ?Sized>(kind: AutoencoderKind, input_dim: usize, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        let mut params = ParamStore::new();
        let mut dims = vec![input_dim];
        dims.extend_from_slice(&config.shapes);

        let mut encoder = Vec::with_capacity(config.depth);
        let mut attention = Vec::new();
        for k in 0..config.depth {
            encoder.push(MiConvLayer::init(&mut params, &format!("enc{k}"), dims[k], dims[k + 1], config.kernels, true, rng));
            if kind == AutoencoderKind::Sag {
                let bound = 1.0 / (dims[k + 1] as f64).sqrt();
                attention.push(params.insert(format!("enc{k}.att"), Matrix::uniform(dims[k + 1], 1, bound, rng)));
            }
        }
        let rev: Vec<usize> = dims.iter().rev().copied().collect();
        let mut decoder = Vec::with_capacity(config.depth);
        for k in 0..config.depth {
            let last = k + 1 == config.depth;
            decoder.push(MiConvLayer::init(&mut params, &format!("dec{k}"), rev[k], rev[k + 1], config.kernels, !last, rng));
        }
        Ok(Self { kind, config, input_dim, params, encoder, decoder, attention })
    }

    pub fn latent_dim(&self) -> usize {
        *self.config.shapes.last().expect("depth >= 1")
    }

    /// Parameter slots that belong to the decoder.
    pub fn decoder_slots(&self) -> Vec<usize> {
        self.decoder.iter().flat_map(|l| l.kernels.iter().flat_map(|&(a, b)| [a, b])).collect()
    }

    /// Runs the encoder on `tape`, pooling after every convolution.
    pub fn encode_on(&self, tape: &mut Tape, params: &[Var], x: Var, g: &Graph) -> Result<EncoderPass> {
        if tape.value(x).cols() != self.input_dim {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: tape.value(x).shape(),
                right: (g.num_nodes(), self.input_dim),
            });
        }
        let mut h = x;
        let mut edges = g.edges.clone();
        let mut steps = Vec::with_capacity(self.config.depth);
        for (k, layer) in self.encoder.iter().enumerate() {
            h = layer.forward_on(tape, params, h, &edges)?;
            let n = tape.value(h).rows();
            let (kept, gate) = match self.kind {
                AutoencoderKind::Miagae => (select_top(&rcs_scores(tape.value(h), &edges), self.config.compression_rate), None),
                AutoencoderKind::Sag => {
                    let z = sag_scores_on(tape, h, &edges, params[self.attention[k]])?;
                    (select_top(tape.value(z).as_slice(), self.config.compression_rate), Some(z))
                }
            };
            let pooled = tape.select_rows(h, &kept)?;
            h = match gate {
                Some(z) => {
                    let zk = tape.select_rows(z, &kept)?;
                    tape.mul_column(pooled, zk)?
                }
                None => pooled,
            };
            let (kept_edges, removed) = induced_edges(&edges, n, &kept);
            steps.push(PoolStep { num_nodes_before: n, kept, removed_edges: removed });
            edges = kept_edges;
        }
        Ok(EncoderPass { latent: h, latent_edges: edges, steps })
    }

    /// Unpools and convolves back to an `N × input_dim` reconstruction.
    pub fn decode_on(&self, tape: &mut Tape, params: &[Var], pass: &EncoderPass) -> Result<Var> {
        if pass.steps.len() != self.decoder.len() {
            return Err(Error::CacheMismatch(format!(
                "{} pooling caches for a depth-{} decoder",
                pass.steps.len(),
                self.decoder.len()
            )));
        }
        let mut h = pass.latent;
        let mut edges = pass.latent_edges.clone();
        for (layer, step) in self.decoder.iter().zip(pass.steps.iter().rev()) {
            if tape.value(h).rows() != step.kept.len() {
                return Err(Error::CacheMismatch(format!(
                    "latent has {} nodes, cache kept {}",
                    tape.value(h).rows(),
                    step.kept.len()
                )));
            }
            h = tape.scatter_rows(h, &step.kept, step.num_nodes_before)?;
            edges = restore_edges(&edges, step);
            h = layer.forward_on(tape, params, h, &edges)?;
        }
        Ok(h)
    }

    /// Encoder, decoder and the per-graph reconstruction term in one pass.
    pub fn forward_on(&self, tape: &mut Tape, params: &[Var], g: &Graph) -> Result<(EncoderPass, Var)> {
        let x = tape.constant(g.features.clone());
        let pass = self.encode_on(tape, params, x, g)?;
        let recon = self.decode_on(tape, params, &pass)?;
        let loss = mse_on(tape, recon, x)?;
        Ok((pass, loss))
    }

    /// The latent graph and its pooling provenance.
    pub fn encode(&self, g: &Graph) -> Result<CompressedGraph> {
        let mut tape = Tape::new();
        let params = self.params.bind_frozen(&mut tape);
        let x = tape.constant(g.features.clone());
        let pass = self.encode_on(&mut tape, &params, x, g)?;
        let features = tape.value(pass.latent).clone();
        Ok(CompressedGraph {
            graph: Graph { features, edges: pass.latent_edges, label: g.label },
            steps: pass.steps,
        })
    }

    /// Decodes a latent graph produced by [`GraphAutoencoder::encode`].
    pub fn decode(&self, latent: &CompressedGraph) -> Result<Matrix> {
        let mut tape = Tape::new();
        let params = self.params.bind_frozen(&mut tape);
        let z = tape.constant(latent.graph.features.clone());
        let pass = EncoderPass { latent: z, latent_edges: latent.graph.edges.clone(), steps: latent.steps.clone() };
        let out = self.decode_on(&mut tape, &params, &pass)?;
        Ok(tape.value(out).clone())
    }

    pub fn reconstruct(&self, g: &Graph) -> Result<Matrix> {
        self.decode(&self.encode(g)?)
    }
}
