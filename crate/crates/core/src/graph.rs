//! The graph sample type shared by every model, plus pooling bookkeeping.
//!
//! Undirected graphs are stored as symmetric pairs of directed edges, sorted
//! by `(src, dst)`. Self-loops are never stored; layers that need `A + I`
//! add the diagonal themselves.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(src: usize, dst: usize, weight: f64) -> Self {
        Self { src, dst, weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    /// `N × d` node features.
    pub features: Matrix,
    /// Directed edges, both directions present, sorted by `(src, dst)`.
    pub edges: Vec<Edge>,
    pub label: u8,
}

impl Graph {
    /// Builds a graph, sorting the edge list. Invariants are not checked; see [`validate`].
    pub fn new(features: Matrix, mut edges: Vec<Edge>, label: u8) -> Self {
        sort_edges(&mut edges);
        Self { features, edges, label }
    }

    /// Builds a graph from undirected `(i, j, w)` triples, inserting both directions.
    pub fn from_undirected(features: Matrix, pairs: &[(usize, usize, f64)], label: u8) -> Self {
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        for &(i, j, w) in pairs {
            edges.push(Edge::new(i, j, w));
            edges.push(Edge::new(j, i, w));
        }
        Self::new(features, edges, label)
    }

    /// Like [`Graph::new`] but rejects graphs that violate an invariant.
    pub fn checked(features: Matrix, edges: Vec<Edge>, label: u8) -> Result<Self> {
        let g = Self::new(features, edges, label);
        let violations = validate(&g);
        if violations.is_empty() {
            Ok(g)
        } else {
            Err(Error::InvalidGraph(violations))
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().filter(|e| e.src < e.dst).map(|e| (e.src, e.dst, e.weight))
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.num_nodes();
        assert_eq!(perm.len(), n, "permutation length");
        let mut features = Matrix::zeros(n, self.feature_dim());
        for (old, &new) in perm.iter().enumerate() {
            features.row_mut(new).copy_from_slice(self.features.row(old));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(perm[e.src], perm[e.dst], e.weight))
            .collect();
        Graph::new(features, edges, self.label)
    }

    pub fn with_features(&self, features: Matrix) -> Graph {
        Graph { features, edges: self.edges.clone(), label: self.label }
    }
}

pub(crate) fn sort_edges(edges: &mut [Edge]) {
    edges.sort_by_key(|e| (e.src, e.dst));
}

/// Every invariant the graph violates. Empty means valid.
pub fn validate(g: &Graph) -> Vec<String> {
    let n = g.num_nodes();
    let mut out = Vec::new();
    if !g.features.is_finite() {
        out.push("non-finite node feature".to_string());
    }
    if g.label > 1 {
        out.push(format!("label {} not in {{0, 1}}", g.label));
    }
    for e in &g.edges {
        if e.src >= n || e.dst >= n {
            out.push(format!("endpoint out of range: ({}, {}) with {} nodes", e.src, e.dst, n));
        } else if e.src == e.dst {
            out.push(format!("self-loop stored at node {}", e.src));
        }
        if !e.weight.is_finite() || e.weight < 0.0 {
            out.push(format!("invalid weight {} on ({}, {})", e.weight, e.src, e.dst));
        }
    }
    for e in &g.edges {
        let found = g
            .edges
            .binary_search_by(|x| (x.src, x.dst).cmp(&(e.dst, e.src)))
            .ok()
            .map(|k| g.edges[k].weight);
        match found {
            None => out.push(format!("missing reverse edge for ({}, {})", e.src, e.dst)),
            Some(w) if w != e.weight => {
                out.push(format!("asymmetric weight on ({}, {}): {} vs {}", e.src, e.dst, e.weight, w))
            }
            _ => {}
        }
    }
    for pair in g.edges.windows(2) {
        if (pair[0].src, pair[0].dst) == (pair[1].src, pair[1].dst) {
            out.push(format!("duplicate edge ({}, {})", pair[0].src, pair[0].dst));
        }
    }
    out
}

/// One pooling step: which nodes survived and which edges were dropped with them.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolStep {
    /// Node count before pooling.
    pub num_nodes_before: usize,
    /// Surviving node indices in the pre-pooling numbering, ascending.
    pub kept: Vec<usize>,
    /// Edges touching a dropped node, in pre-pooling numbering.
    pub removed_edges: Vec<Edge>,
}

/// A latent graph together with what the decoder needs to undo each pooling step.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedGraph {
    pub graph: Graph,
    pub steps: Vec<PoolStep>,
}

impl CompressedGraph {
    /// Node indices of the latent graph in the original input numbering.
    pub fn original_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = match self.steps.last() {
            Some(s) => s.kept.clone(),
            None => (0..self.graph.num_nodes()).collect(),
        };
        for step in self.steps.iter().rev().skip(1) {
            idx = idx.iter().map(|&i| step.kept[i]).collect();
        }
        idx
    }
}

/// Keeps the nodes in `keep` and reindexes them densely, preserving order.
///
/// Returns the subgraph and every edge that touched a dropped node, in the
/// original numbering.
pub fn induced_subgraph(g: &Graph, keep: &[usize]) -> Result<(Graph, PoolStep)> {
    let n = g.num_nodes();
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSelection("indices must be sorted and unique".into()));
    }
    if let Some(&bad) = keep.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidSelection(format!("index {bad} out of range for {n} nodes")));
    }
    let remap = dense_remap(n, keep);
    let mut edges = Vec::new();
    let mut removed = Vec::new();
    for e in &g.edges {
        match (remap[e.src], remap[e.dst]) {
            (Some(s), Some(d)) => edges.push(Edge::new(s, d, e.weight)),
            _ => removed.push(*e),
        }
    }
    let sub = Graph { features: g.features.select_rows(keep), edges, label: g.label };
    Ok((sub, PoolStep { num_nodes_before: n, kept: keep.to_vec(), removed_edges: removed }))
}

/// Edges of the induced subgraph only (no feature copy).
pub fn induced_edges(edges: &[Edge], num_nodes: usize, keep: &[usize]) -> (Vec<Edge>, Vec<Edge>) {
    let remap = dense_remap(num_nodes, keep);
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for e in edges {
        match (remap[e.src], remap[e.dst]) {
            (Some(s), Some(d)) => kept.push(Edge::new(s, d, e.weight)),
            _ => removed.push(*e),
        }
    }
    (kept, removed)
}

/// Inverse of [`induced_edges`]: lifts the pooled edges back and merges the cache.
pub fn restore_edges(pooled: &[Edge], step: &PoolStep) -> Vec<Edge> {
    let mut edges: Vec<Edge> = pooled
        .iter()
        .map(|e| Edge::new(step.kept[e.src], step.kept[e.dst], e.weight))
        .chain(step.removed_edges.iter().copied())
        .collect();
    sort_edges(&mut edges);
    edges
}

fn dense_remap(n: usize, keep: &[usize]) -> Vec<Option<usize>> {
    let mut remap = vec![None; n];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = Some(new);
    }
    remap
}

/// A set of graphs with flattened node offsets.
#[derive(Debug, Clone)]
pub struct GraphBatch<'a> {
    pub graphs: Vec<&'a Graph>,
    /// `offsets[k]` is the first flattened node index of graph `k`; one extra trailing entry.
    pub offsets: Vec<usize>,
}

impl<'a> GraphBatch<'a> {
    pub fn new(graphs: Vec<&'a Graph>) -> Self {
        let mut offsets = Vec::with_capacity(graphs.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for g in &graphs {
            total += g.num_nodes();
            offsets.push(total);
        }
        Self { graphs, offsets }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn total_nodes(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.graphs.iter().map(|g| g.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_undirected(
            Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]),
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
            1,
        )
    }

    #[test]
    fn triangle_keep_two() {
        let (sub, step) = induced_subgraph(&triangle(), &[0, 1]).unwrap();
        assert_eq!(sub.num_nodes(), 2);
        assert_eq!(sub.undirected_edges().collect::<Vec<_>>(), vec![(0, 1, 1.0)]);
        assert_eq!(step.removed_edges.len(), 4);
        assert!(step.removed_edges.iter().all(|e| e.src == 2 || e.dst == 2));
    }

    #[test]
    fn keep_all_is_identity() {
        let g = triangle();
        let (sub, step) = induced_subgraph(&g, &[0, 1, 2]).unwrap();
        assert_eq!(sub, g);
        assert!(step.removed_edges.is_empty());
    }

    #[test]
    fn empty_keep_rejected() {
        let err = induced_subgraph(&triangle(), &[]).unwrap_err();
        assert_eq!(err.to_string(), "empty pooling selection");
        assert!(induced_subgraph(&triangle(), &[1, 0]).is_err());
        assert!(induced_subgraph(&triangle(), &[0, 3]).is_err());
    }

    #[test]
    fn validate_reports_violations() {
        assert!(validate(&triangle()).is_empty());

        let g = Graph::new(Matrix::zeros(3, 1), vec![Edge::new(0, 5, 1.0), Edge::new(5, 0, 1.0)], 0);
        assert!(validate(&g).iter().any(|v| v.contains("endpoint out of range")));

        let g = Graph::new(Matrix::zeros(3, 1), vec![Edge::new(0, 1, 1.0)], 0);
        assert!(validate(&g).iter().any(|v| v.contains("missing reverse edge")));

        let g = Graph::new(Matrix::zeros(2, 1), vec![Edge::new(0, 1, -1.0), Edge::new(1, 0, -1.0)], 0);
        assert!(validate(&g).iter().any(|v| v.contains("invalid weight")));
    }

    #[test]
    fn restore_inverts_induced() {
        let g = triangle();
        let (sub, step) = induced_subgraph(&g, &[0, 2]).unwrap();
        assert_eq!(restore_edges(&sub.edges, &step), g.edges);
    }

    #[test]
    fn batch_offsets() {
        let a = triangle();
        let b = Graph::new(Matrix::zeros(2, 1), vec![], 0);
        let batch = GraphBatch::new(vec![&a, &b, &a]);
        assert_eq!(batch.offsets, vec![0, 3, 5, 8]);
        assert_eq!(batch.total_nodes(), 8);
        assert_eq!(batch.labels(), vec![1, 0, 1]);
    }
}
