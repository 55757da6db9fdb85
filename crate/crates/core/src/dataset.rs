//! On-disk graph datasets.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic      b"GGCD"
//! version    u32 (= 1)
//! dim        u32   feature width shared by every graph
//! count      u64   number of graphs
//! per graph:
//!   n        u32
//!   label    u8
//!   features n * dim f32, row-major
//!   m        u32   number of directed edges
//!   edges    m * (u32 src, u32 dst, f32 weight)
//! ```
//!
//! The text format holds one block per graph:
//!
//! ```text
//! graph <label> <n> <dim>
//! <dim feature values>      (n lines)
//! edge <src> <dst> <weight> (one line per undirected edge, src < dst)
//! end
//! ```

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::graph::{validate, Graph};
use crate::tensor::Matrix;

const MAGIC: &[u8; 4] = b"GGCD";
const VERSION: u32 = 1;

pub fn write_dataset<W: Write>(w: &mut W, graphs: &[Graph]) -> Result<()> {
    let dim = graphs.first().map_or(0, Graph::feature_dim);
    if let Some(g) = graphs.iter().find(|g| g.feature_dim() != dim) {
        return Err(Error::ShapeMismatch { op: "write_dataset", left: (0, dim), right: g.features.shape() });
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(graphs.len() as u64).to_le_bytes())?;
    for g in graphs {
        w.write_all(&(g.num_nodes() as u32).to_le_bytes())?;
        w.write_all(&[g.label])?;
        for &v in g.features.as_slice() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.write_all(&(g.edges.len() as u32).to_le_bytes())?;
        for e in &g.edges {
            w.write_all(&(e.src as u32).to_le_bytes())?;
            w.write_all(&(e.dst as u32).to_le_bytes())?;
            w.write_all(&(e.weight as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a container and validates every graph in it.
pub fn read_dataset<R: Read>(r: &mut R) -> Result<Vec<Graph>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = ByteCursor::new(&buf);
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("not a graph dataset (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let dim = cur.u32()? as usize;
    let count = cur.u64()? as usize;
    let mut graphs = Vec::with_capacity(count.min(1 << 20));
    for idx in 0..count {
        let n = cur.u32()? as usize;
        let label = cur.take(1)?[0];
        let data = (0..n * dim).map(|_| cur.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        let m = cur.u32()? as usize;
        let mut edges = Vec::with_capacity(m.min(1 << 20));
        for _ in 0..m {
            let (s, d, w) = (cur.u32()? as usize, cur.u32()? as usize, f64::from(cur.f32()?));
            edges.push(crate::graph::Edge::new(s, d, w));
        }
        let g = Graph::new(Matrix::from_vec(n, dim, data), edges, label);
        check(idx, &g)?;
        graphs.push(g);
    }
    if !cur.is_empty() {
        return Err(Error::Format("trailing bytes after last graph".into()));
    }
    Ok(graphs)
}

fn check(idx: usize, g: &Graph) -> Result<()> {
    let v = validate(g);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidGraph(v.into_iter().map(|s| format!("graph {idx}: {s}")).collect()))
    }
}

pub fn dataset_to_text(graphs: &[Graph]) -> String {
    let mut s = String::new();
    for g in graphs {
        let _ = writeln!(s, "graph {} {} {}", g.label, g.num_nodes(), g.feature_dim());
        for i in 0..g.num_nodes() {
            let row: Vec<String> = g.features.row(i).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        for (a, b, w) in g.undirected_edges() {
            let _ = writeln!(s, "edge {a} {b} {w:?}");
        }
        s.push_str("end\n");
    }
    s
}

pub fn parse_dataset_text(text: &str) -> Result<Vec<Graph>> {
    let mut graphs = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    while let Some((no, header)) = lines.next() {
        let bad = |no: usize, msg: &str| Error::Format(format!("line {no}: {msg}"));
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "graph" {
            return Err(bad(no, "expected `graph <label> <n> <dim>`"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(no, "bad integer"));
        let (label, n, dim) = (num(h[1])?, num(h[2])?, num(h[3])?);
        let label = u8::try_from(label).map_err(|_| bad(no, "bad label"))?;
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let (no, row) = lines.next().ok_or_else(|| bad(no, "unexpected end of input"))?;
            let vals = row.split_whitespace().map(str::parse::<f64>).collect::<std::result::Result<Vec<_>, _>>();
            match vals {
                Ok(v) if v.len() == dim => data.extend(v),
                _ => return Err(bad(no, "expected a feature row")),
            }
        }
        let mut undirected = Vec::new();
        loop {
            let (no, line) = lines.next().ok_or_else(|| bad(no, "missing `end`"))?;
            if line == "end" {
                break;
            }
            let p: Vec<&str> = line.split_whitespace().collect();
            let parsed = (p.len() == 4 && p[0] == "edge")
                .then(|| Some((p[1].parse().ok()?, p[2].parse().ok()?, p[3].parse().ok()?)))
                .flatten();
            undirected.push(parsed.ok_or_else(|| bad(no, "expected `edge <src> <dst> <weight>`"))?);
        }
        let g = Graph::from_undirected(Matrix::from_vec(n, dim, data), &undirected, label);
        check(graphs.len(), &g)?;
        graphs.push(g);
    }
    Ok(graphs)
}

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct ByteCursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        self.array().map(i32::from_le_bytes)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        self.array().map(f32::from_le_bytes)
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}
