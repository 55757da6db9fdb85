//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A forward pass appends one node per operation to a [`Tape`]. Nodes are
//! created in topological order, so [`Tape::backward`] walks them once in
//! reverse. Graph-specific primitives (neighbourhood mean and the
//! symmetrically normalised `A + I` aggregation) are first-class ops so their
//! gradients are exact and cheap.
//!
//! ```
//! use ggc::autodiff::Tape;
//! use ggc::tensor::Matrix;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
//! let loss = tape.sum(w);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).as_slice(), &[1.0; 4]);
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::tensor::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type VjpFn = Box<dyn Fn(&Matrix) -> Vec<Matrix>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    MeanRows(Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    SelectRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
    AddRowBroadcast(Var, Var),
    MulColumnBroadcast(Var, Var),
    NeighborhoodMean(Var, Vec<(usize, usize)>, Vec<f64>),
    NormAggregate(Var, NormalizedAdjacency),
    Stack(Vec<Var>),
    Bce(Var, Vec<f64>),
    Custom(Vec<Var>, VjpFn),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` in sparse form, with `D̃` the row sums of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub diag: Vec<f64>,
    /// `(i, j, coefficient)` for every stored edge `i -> j`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl NormalizedAdjacency {
    pub fn new(num_nodes: usize, edges: &[Edge]) -> Self {
        let mut degree = vec![1.0; num_nodes];
        for e in edges {
            degree[e.src] += e.weight;
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
        let diag = inv_sqrt.iter().map(|s| s * s).collect();
        let entries = edges
            .iter()
            .map(|e| (e.src, e.dst, e.weight * inv_sqrt[e.src] * inv_sqrt[e.dst]))
            .collect();
        Self { diag, entries }
    }

    pub fn num_nodes(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for (i, &d) in self.diag.iter().enumerate() {
            for (o, &v) in out.row_mut(i).iter_mut().zip(x.row(i)) {
                *o = d * v;
            }
        }
        for &(i, j, c) in &self.entries {
            let src = x.row(j).to_vec();
            for (o, v) in out.row_mut(i).iter_mut().zip(src) {
                *o += c * v;
            }
        }
        out
    }

    /// Transposed application (used for the backward pass; equals `apply` for symmetric graphs).
    pub fn apply_transpose(&self, g: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(g.rows(), g.cols());
        for (i, &d) in self.diag.iter().enumerate() {
            for (o, &v) in out.row_mut(i).iter_mut().zip(g.row(i)) {
                *o = d * v;
            }
        }
        for &(i, j, c) in &self.entries {
            let src = g.row(i).to_vec();
            for (o, v) in out.row_mut(j).iter_mut().zip(src) {
                *o += c * v;
            }
        }
        out
    }
}

/// Mean of each node's neighbour rows; isolated nodes get a zero row.
pub fn neighborhood_mean(x: &Matrix, edges: &[Edge]) -> Matrix {
    let (pairs, inv) = neighbor_pairs(x.rows(), edges);
    neighborhood_mean_raw(x, &pairs, &inv)
}

fn neighbor_pairs(n: usize, edges: &[Edge]) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut count = vec![0usize; n];
    for e in edges {
        count[e.src] += 1;
    }
    let inv = count.iter().map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 }).collect();
    (edges.iter().map(|e| (e.src, e.dst)).collect(), inv)
}

fn neighborhood_mean_raw(x: &Matrix, pairs: &[(usize, usize)], inv: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for &(i, j) in pairs {
        let s = inv[i];
        let src = x.row(j).to_vec();
        for (o, v) in out.row_mut(i).iter_mut().zip(src) {
            *o += s * v;
        }
    }
    out
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::ShapeMismatch { op, left: a.shape(), right: b.shape() }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears every record so the tape can be reused for another step.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.backward_done = false;
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable input whose gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let out = va.matmul(vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(op, va, vb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        let rg = self.rg(a);
        self.push(out, Op::Affine(a, scale), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(out, Op::Square(a), rg)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(out, Op::Clamp(a, lo, hi), rg)
    }

    /// Column-wise mean over rows: `N × d -> 1 × d`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let out = column_sums(self.value(a)).scale(1.0 / self.value(a).rows().max(1) as f64);
        let rg = self.rg(a);
        self.push(out, Op::MeanRows(a), rg)
    }

    /// Column-wise sum over rows: `N × d -> 1 × d`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let out = column_sums(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Sum of every entry, `1 × 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    /// Mean of every entry, `1 × 1`.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Matrix::scalar(v.sum() / v.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= v.rows()) {
            return Err(Error::InvalidSelection(format!("row {bad} out of range for {} rows", v.rows())));
        }
        let out = v.select_rows(rows);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SelectRows(a, rows.to_vec()), rg))
    }

    /// Places row `k` of `a` at row `rows[k]` of an `n_rows`-row zero matrix.
    pub fn scatter_rows(&mut self, a: Var, rows: &[usize], n_rows: usize) -> Result<Var> {
        let v = self.value(a);
        if rows.len() != v.rows() || rows.iter().any(|&r| r >= n_rows) {
            return Err(Error::InvalidSelection(format!(
                "cannot scatter {} rows into {} with {} targets",
                v.rows(),
                n_rows,
                rows.len()
            )));
        }
        let mut out = Matrix::zeros(n_rows, v.cols());
        for (k, &r) in rows.iter().enumerate() {
            out.row_mut(r).copy_from_slice(v.row(k));
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::ScatterRows(a, rows.to_vec()), rg))
    }

    /// `a + 1·bias` with `bias` a `1 × d` row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(shape_err("add_row", va, vb));
        }
        let mut out = va.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(vb.as_slice()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRowBroadcast(a, bias), rg))
    }

    /// Scales row `i` of `a` by `gate[i]`, with `gate` an `N × 1` column.
    pub fn mul_column(&mut self, a: Var, gate: Var) -> Result<Var> {
        let (va, vg) = (self.value(a), self.value(gate));
        if vg.cols() != 1 || vg.rows() != va.rows() {
            return Err(shape_err("mul_column", va, vg));
        }
        let mut out = va.clone();
        for i in 0..out.rows() {
            let s = vg[(i, 0)];
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        let rg = self.rg(a) || self.rg(gate);
        Ok(self.push(out, Op::MulColumnBroadcast(a, gate), rg))
    }

    /// Per node, the mean of its neighbours' rows (zero when isolated).
    pub fn neighborhood_mean(&mut self, x: Var, edges: &[Edge]) -> Result<Var> {
        let n = self.value(x).rows();
        check_edges(edges, n)?;
        let (pairs, inv) = neighbor_pairs(n, edges);
        let out = neighborhood_mean_raw(self.value(x), &pairs, &inv);
        let rg = self.rg(x);
        Ok(self.push(out, Op::NeighborhoodMean(x, pairs, inv), rg))
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2} X` with edge weights in `A`.
    pub fn degree_normalized_aggregate(&mut self, x: Var, edges: &[Edge]) -> Result<Var> {
        let n = self.value(x).rows();
        check_edges(edges, n)?;
        let adj = NormalizedAdjacency::new(n, edges);
        Ok(self.aggregate_with(x, adj))
    }

    pub fn aggregate_with(&mut self, x: Var, adj: NormalizedAdjacency) -> Var {
        let out = adj.apply(self.value(x));
        let rg = self.rg(x);
        self.push(out, Op::NormAggregate(x, adj), rg)
    }

    /// Stacks `1 × 1` values into an `M × 1` column.
    pub fn stack(&mut self, items: &[Var]) -> Result<Var> {
        let mut data = Vec::with_capacity(items.len());
        for &v in items {
            let m = self.value(v);
            if m.shape() != (1, 1) {
                return Err(Error::ShapeMismatch { op: "stack", left: m.shape(), right: (1, 1) });
            }
            data.push(m.item());
        }
        let rg = items.iter().any(|&v| self.rg(v));
        Ok(self.push(Matrix::from_vec(items.len(), 1, data), Op::Stack(items.to_vec()), rg))
    }

    /// Mean binary cross-entropy of an `M × 1` probability column against `labels`.
    pub fn bce(&mut self, probs: Var, labels: &[f64]) -> Result<Var> {
        let p = self.value(probs);
        if p.cols() != 1 || p.rows() != labels.len() {
            return Err(Error::ShapeMismatch { op: "bce", left: p.shape(), right: (labels.len(), 1) });
        }
        let out = Matrix::scalar(bce_value(p.as_slice(), labels));
        let rg = self.rg(probs);
        Ok(self.push(out, Op::Bce(probs, labels.to_vec()), rg))
    }

    /// An externally computed node. `vjp` maps the upstream gradient of `value`
    /// to one gradient per input, in order.
    pub fn custom(&mut self, inputs: &[Var], value: Matrix, vjp: impl Fn(&Matrix) -> Vec<Matrix> + 'static) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(value, Op::Custom(inputs.to_vec(), Box::new(vjp)), rg)
    }

    /// Propagates `d loss / d node` to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            let contributions = self.local_grads(node, &g);
            for (v, c) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&c),
                    slot @ None => *slot = Some(c),
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, node: &Node, g: &Matrix) -> Vec<(Var, Matrix)> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if self.rg(*a) {
                    out.push((*a, g.matmul(&val(*b).transpose())));
                }
                if self.rg(*b) {
                    out.push((*b, val(*a).transpose().matmul(g)));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
            Op::Mul(a, b) => {
                vec![(*a, g.zip_map(val(*b), |x, y| x * y)), (*b, g.zip_map(val(*a), |x, y| x * y))]
            }
            Op::Affine(a, s) => vec![(*a, g.scale(*s))],
            Op::Relu(a) => vec![(*a, g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { 0.0 }))],
            Op::Tanh(a) => vec![(*a, g.zip_map(&node.value, |d, y| d * (1.0 - y * y)))],
            Op::Sigmoid(a) => vec![(*a, g.zip_map(&node.value, |d, y| d * y * (1.0 - y)))],
            Op::Log(a) => vec![(*a, g.zip_map(val(*a), |d, x| d / x))],
            Op::Square(a) => vec![(*a, g.zip_map(val(*a), |d, x| 2.0 * d * x))],
            Op::Clamp(a, lo, hi) => {
                vec![(*a, g.zip_map(val(*a), |d, x| if x >= *lo && x <= *hi { d } else { 0.0 }))]
            }
            Op::MeanRows(a) | Op::SumRows(a) => {
                let rows = val(*a).rows();
                let s = if matches!(node.op, Op::MeanRows(_)) { 1.0 / rows.max(1) as f64 } else { 1.0 };
                let mut out = Matrix::zeros(rows, g.cols());
                for i in 0..rows {
                    for (o, d) in out.row_mut(i).iter_mut().zip(g.as_slice()) {
                        *o = s * d;
                    }
                }
                vec![(*a, out)]
            }
            Op::Sum(a) | Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                let s = if matches!(node.op, Op::Mean(_)) { 1.0 / (r * c).max(1) as f64 } else { 1.0 };
                vec![(*a, Matrix::filled(r, c, g.item() * s))]
            }
            Op::SelectRows(a, rows) => {
                let mut out = Matrix::zeros(val(*a).rows(), g.cols());
                for (k, &r) in rows.iter().enumerate() {
                    for (o, d) in out.row_mut(r).iter_mut().zip(g.row(k)) {
                        *o += d;
                    }
                }
                vec![(*a, out)]
            }
            Op::ScatterRows(a, rows) => vec![(*a, g.select_rows(rows))],
            Op::AddRowBroadcast(a, b) => vec![(*a, g.clone()), (*b, column_sums(g))],
            Op::MulColumnBroadcast(a, gate) => {
                let (va, vg) = (val(*a), val(*gate));
                let mut da = g.clone();
                let mut dg = Matrix::zeros(vg.rows(), 1);
                for i in 0..da.rows() {
                    let s = vg[(i, 0)];
                    dg[(i, 0)] = g.row(i).iter().zip(va.row(i)).map(|(d, x)| d * x).sum();
                    da.row_mut(i).iter_mut().for_each(|x| *x *= s);
                }
                vec![(*a, da), (*gate, dg)]
            }
            Op::NeighborhoodMean(a, pairs, inv) => {
                let mut out = Matrix::zeros(g.rows(), g.cols());
                for &(i, j) in pairs {
                    let s = inv[i];
                    let src = g.row(i).to_vec();
                    for (o, d) in out.row_mut(j).iter_mut().zip(src) {
                        *o += s * d;
                    }
                }
                vec![(*a, out)]
            }
            Op::NormAggregate(a, adj) => vec![(*a, adj.apply_transpose(g))],
            Op::Stack(items) => items.iter().enumerate().map(|(k, &v)| (v, Matrix::scalar(g[(k, 0)]))).collect(),
            Op::Bce(p, labels) => {
                let m = labels.len() as f64;
                let d = g.item();
                let grad: Vec<f64> = val(*p)
                    .as_slice()
                    .iter()
                    .zip(labels)
                    .map(|(&p, &y)| d * (p - y) / (p * (1.0 - p)) / m)
                    .collect();
                vec![(*p, Matrix::from_vec(labels.len(), 1, grad))]
            }
            Op::Custom(inputs, vjp) => inputs.iter().copied().zip(vjp(g)).collect(),
        }
    }
}

fn check_edges(edges: &[Edge], n: usize) -> Result<()> {
    match edges.iter().find(|e| e.src >= n || e.dst >= n) {
        Some(e) => Err(Error::InvalidSelection(format!("edge ({}, {}) invalid for {} nodes", e.src, e.dst, n))),
        None => Ok(()),
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for i in 0..m.rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    out
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-mean(y ln p + (1 - y) ln(1 - p))`.
pub fn bce_value(probs: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .sum();
    total / labels.len() as f64
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of `v`, zeros if nothing flowed into it.
    pub fn get(&self, v: Var) -> Matrix {
        self.try_get(v).cloned().unwrap_or_else(|| Matrix::scalar(0.0))
    }

    pub fn try_get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients for a list of parameter handles, zero-filled to each value's shape.
    pub fn collect(&self, tape: &Tape, vars: &[Var]) -> Vec<Matrix> {
        vars.iter()
            .map(|&v| match self.try_get(v) {
                Some(g) => g.clone(),
                None => {
                    let (r, c) = tape.value(v).shape();
                    Matrix::zeros(r, c)
                }
            })
            .collect()
    }
}

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor and returns its slot index.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Matrix {
        &self.values[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Matrix {
        &mut self.values[idx]
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Registers every tensor on `tape` as a trainable leaf, in slot order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.param(v.clone())).collect()
    }

    /// Registers every tensor as a constant (frozen) leaf.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.constant(v.clone())).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// All entries concatenated in slot order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.values.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect()
    }
}

/// Adam with `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    /// One bias-corrected update. Rejects non-finite gradients without touching anything.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::ShapeMismatch { op: "adam", left: (params.len(), 1), right: (grads.len(), 1) });
        }
        for (p, g) in params.values.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(shape_err("adam", p, g));
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.values.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let ps = p.as_mut_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for (k, &gk) in g.as_slice().iter().enumerate() {
                ms[k] = self.beta1 * ms[k] + (1.0 - self.beta1) * gk;
                vs[k] = self.beta2 * vs[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = ms[k] / c1;
                let vhat = vs[k] / c2;
                ps[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"GGCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes parameters and optimizer state as little-endian `f64` tensors.
///
/// Layout: magic `GGCK`, `u32` version, `u32` tensor count, then per tensor
/// `u32` name length, UTF-8 name, `u32` rows, `u32` cols, `rows*cols` `f64`.
/// Then a `u8` optimizer flag; when set, `f64` lr, `u64` step and the `m`
/// and `v` tensors in slot order (shapes implied by the parameters).
pub fn write_checkpoint<W: Write>(w: &mut W, params: &ParamStore, adam: Option<&Adam>) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, m) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(m.rows() as u32).to_le_bytes())?;
        w.write_all(&(m.cols() as u32).to_le_bytes())?;
        write_f64s(w, m.as_slice())?;
    }
    match adam {
        None => w.write_all(&[0u8])?,
        Some(a) => {
            w.write_all(&[1u8])?;
            w.write_all(&a.lr.to_le_bytes())?;
            w.write_all(&a.step.to_le_bytes())?;
            for m in a.m.iter().chain(&a.v) {
                write_f64s(w, m.as_slice())?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(ParamStore, Option<Adam>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        let data = read_f64s(r, rows * cols)?;
        params.insert(name, Matrix::from_vec(rows, cols, data));
    }
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let adam = if flag[0] == 1 {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let lr = f64::from_le_bytes(buf);
        r.read_exact(&mut buf)?;
        let step = u64::from_le_bytes(buf);
        let mut adam = Adam::new(&params, lr);
        adam.step = step;
        for m in adam.m.iter_mut().chain(adam.v.iter_mut()) {
            let data = read_f64s(r, m.len())?;
            m.as_mut_slice().copy_from_slice(&data);
        }
        Some(adam)
    } else {
        None
    };
    Ok((params, adam))
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            r.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::from_rows(&[vec![0.3, -1.0], vec![2.0, 5.0]]));
        let l = tape.sum(w);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(w), Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn mse_gradient_is_analytic() {
        let wv = Matrix::from_rows(&[vec![0.5, -1.5], vec![2.0, 0.25]]);
        let xv = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 0.0]]);
        let mut tape = Tape::new();
        let w = tape.param(wv.clone());
        let x = tape.constant(xv.clone());
        let d = tape.sub(w, x).unwrap();
        let sq = tape.square(d);
        let l = tape.mean(sq);
        let g = tape.backward(l).unwrap();
        let expected = wv.zip_map(&xv, |w, x| 2.0 * (w - x) / 4.0);
        assert_eq!(g.get(w), expected);
    }

    #[test]
    fn non_scalar_and_double_backward_rejected() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::zeros(2, 2));
        assert!(matches!(tape.backward(w), Err(Error::NonScalarLoss((2, 2)))));
        let l = tape.sum(w);
        tape.backward(l).unwrap();
        assert!(matches!(tape.backward(l), Err(Error::BackwardTwice)));
        tape.reset();
        assert!(tape.is_empty());
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::zeros(2, 3));
        let b = tape.constant(Matrix::zeros(2, 3));
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn isolated_node_mean_is_zero() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let edges = vec![Edge::new(0, 1, 1.0), Edge::new(1, 0, 1.0)];
        let m = neighborhood_mean(&x, &edges);
        assert_eq!(m.row(2), &[0.0, 0.0]);
        assert_eq!(m.row(0), &[3.0, 4.0]);
    }

    #[test]
    fn single_node_aggregate_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[vec![1.5, -2.0]]));
        let y = tape.degree_normalized_aggregate(x, &[]).unwrap();
        assert_eq!(tape.value(y), &Matrix::from_rows(&[vec![1.5, -2.0]]));
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = ParamStore::new();
        p.insert("w", Matrix::from_rows(&[vec![0.1, -0.2]]));
        let before = p.clone();
        let mut adam = Adam::new(&p, 0.01);
        adam.step(&mut p, &[Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParamStore::new();
        p.insert("w", Matrix::from_rows(&[vec![1.0, 1.0, 1.0]]));
        let mut adam = Adam::new(&p, 0.05);
        adam.step(&mut p, &[Matrix::from_rows(&[vec![3.0, -0.01, 200.0]])]).unwrap();
        let moved: Vec<f64> = p.get(0).as_slice().iter().map(|x| (x - 1.0).abs()).collect();
        for m in moved {
            assert!((m - 0.05).abs() < 1e-6, "{m}");
        }
    }

    #[test]
    fn adam_rejects_nan() {
        let mut p = ParamStore::new();
        p.insert("w", Matrix::zeros(1, 1));
        let mut adam = Adam::new(&p, 0.1);
        let err = adam.step(&mut p, &[Matrix::scalar(f64::NAN)]).unwrap_err();
        assert_eq!(err.to_string(), "non-finite gradient");
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        // f(w) = Σ (w_k - c_k)^2, minimum at c.
        let target = [1.5, -0.75, 0.2];
        let mut p = ParamStore::new();
        p.insert("w", Matrix::zeros(1, 3));
        let mut adam = Adam::new(&p, 0.08);
        for _ in 0..100 {
            let g: Vec<f64> = p.get(0).as_slice().iter().zip(target).map(|(w, c)| 2.0 * (w - c)).collect();
            adam.step(&mut p, &[Matrix::from_vec(1, 3, g)]).unwrap();
        }
        let gap: f64 = p.get(0).as_slice().iter().zip(target).map(|(w, c)| (w - c) * (w - c)).sum();
        assert!(gap < 1e-3, "objective gap {gap}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut p = ParamStore::new();
        p.insert("enc.w1", Matrix::from_rows(&[vec![0.1, 0.2], vec![-3.0, 1e-300]]));
        p.insert("cls.b", Matrix::scalar(-0.0));
        let mut adam = Adam::new(&p, 0.01);
        adam.step(&mut p, &[Matrix::filled(2, 2, 0.5), Matrix::scalar(1.0)]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, Some(&adam)).unwrap();
        let (p2, a2) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(p2, p);
        assert_eq!(a2.unwrap(), adam);
    }
}
