//! Jet records to graphs.
//!
//! Each particle `(p_T, y, φ, pdgid)` becomes a node with 13 features
//! relative to the jet axis, and every pair of particles is joined by an
//! edge weighted by their distance in the `(Δη, Δφ)` plane. Particles are
//! treated as massless, so `η = y` and `E = p_T cosh y`.
//!
//! Node feature layout:
//!
//! | idx | feature                 |
//! |-----|-------------------------|
//! | 0   | Δη                      |
//! | 1   | Δφ                      |
//! | 2   | log p_T                 |
//! | 3   | log E                   |
//! | 4   | log(p_T / p_T(jet))     |
//! | 5   | log(E / E(jet))         |
//! | 6   | ΔR                      |
//! | 7   | charge                  |
//! | 8   | electron flag           |
//! | 9   | muon flag               |
//! | 10  | photon flag             |
//! | 11  | charged hadron weight   |
//! | 12  | neutral hadron weight   |

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::ByteCursor;
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::tensor::Matrix;

pub const NUM_FEATURES: usize = 13;
pub const DETA: usize = 0;
pub const DPHI: usize = 1;
/// Columns divided by their training-set maximum absolute value.
pub const NORMALIZED_COLUMNS: [usize; 5] = [2, 3, 4, 5, 6];
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "deta", "dphi", "log_pt", "log_e", "log_pt_rel", "log_e_rel", "delta_r", "charge", "electron", "muon", "photon",
    "charged_hadron", "neutral_hadron",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawParticle {
    pub pt: f64,
    pub y: f64,
    pub phi: f64,
    pub pdgid: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawJet {
    pub particles: Vec<RawParticle>,
    pub label: u8,
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Electric charge for the particle ids present in the source data; `None` otherwise.
pub fn charge(pdgid: i32) -> Option<f64> {
    let sign = f64::from(pdgid.signum());
    match pdgid.abs() {
        // Negative leptons carry positive ids.
        11 | 13 => Some(-sign),
        211 | 321 | 2212 => Some(sign),
        22 | 130 | 2112 => Some(0.0),
        _ => None,
    }
}

/// The identification block (charge, e, μ, γ, CH, NH).
pub fn identity_features(pdgid: i32) -> [f64; 6] {
    let a = pdgid.abs();
    let is = |v: i32| if a == v { 1.0 } else { 0.0 };
    let q = charge(pdgid).unwrap_or_else(|| {
        log::warn!("unknown pdgid={pdgid}; charge set to 0");
        0.0
    });
    [
        q,
        is(11),
        is(13),
        is(22),
        is(211) + is(321) * 0.5 + is(2212) * 0.2,
        is(130) + is(2112) * 0.2,
    ]
}

/// Jet axis `(η, φ)`: `p_T`-weighted mean rapidity and circular mean angle.
pub fn jet_axis(particles: &[RawParticle]) -> (f64, f64) {
    let total: f64 = particles.iter().map(|p| p.pt).sum();
    // Both means are measured from the leading particle so a lone particle is its own axis exactly.
    let lead = particles.iter().fold(particles[0], |best, p| if p.pt > best.pt { *p } else { best });
    let eta = lead.y + particles.iter().map(|p| p.pt * (p.y - lead.y)).sum::<f64>() / total;
    let (s, c) = particles.iter().fold((0.0, 0.0), |(s, c), p| {
        let d = p.phi - lead.phi;
        (s + p.pt * d.sin(), c + p.pt * d.cos())
    });
    (eta, wrap_phi(lead.phi + s.atan2(c)))
}

/// The `N × 13` feature matrix of one jet.
pub fn augment(particles: &[RawParticle]) -> Result<Matrix> {
    if particles.is_empty() {
        return Err(Error::InsufficientSamples("jet has no particles".into()));
    }
    if let Some(p) = particles.iter().find(|p| p.pt.is_nan() || p.pt <= 0.0 || !p.y.is_finite() || !p.phi.is_finite()) {
        return Err(Error::Format(format!("invalid particle {p:?}")));
    }
    let (eta_jet, phi_jet) = jet_axis(particles);
    let pt_jet: f64 = particles.iter().map(|p| p.pt).sum();
    let e_jet: f64 = particles.iter().map(|p| p.pt * p.y.cosh()).sum();
    let mut out = Matrix::zeros(particles.len(), NUM_FEATURES);
    for (i, p) in particles.iter().enumerate() {
        let e = p.pt * p.y.cosh();
        let deta = p.y - eta_jet;
        let dphi = wrap_phi(p.phi - phi_jet);
        let row = out.row_mut(i);
        row[0] = deta;
        row[1] = dphi;
        row[2] = p.pt.ln();
        row[3] = e.ln();
        row[4] = (p.pt / pt_jet).ln();
        row[5] = (e / e_jet).ln();
        row[6] = (deta * deta + dphi * dphi).sqrt();
        row[7..].copy_from_slice(&identity_features(p.pdgid));
    }
    Ok(out)
}

/// Fully connected graph with `d_AB = sqrt((Δη_A − Δη_B)² + (Δφ_A − Δφ_B)²)`.
pub fn build_graph(features: Matrix, deta: &[f64], dphi: &[f64], label: u8) -> Graph {
    let n = features.rows();
    assert_eq!(deta.len(), n);
    assert_eq!(dphi.len(), n);
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1));
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let d = ((deta[a] - deta[b]).powi(2) + (dphi[a] - dphi[b]).powi(2)).sqrt();
                edges.push(Edge::new(a, b, d));
            }
        }
    }
    Graph { features, edges, label }
}

/// [`augment`] then [`build_graph`] on the jet's own `Δη`, `Δφ` columns.
pub fn jet_to_graph(jet: &RawJet) -> Result<Graph> {
    let x = augment(&jet.particles)?;
    let deta: Vec<f64> = (0..x.rows()).map(|i| x[(i, DETA)]).collect();
    let dphi: Vec<f64> = (0..x.rows()).map(|i| x[(i, DPHI)]).collect();
    Ok(build_graph(x, &deta, &dphi, jet.label))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    /// Max |value| per entry of [`NORMALIZED_COLUMNS`].
    pub max_abs: [f64; 5],
}

impl NormalizationStats {
    pub fn fit(train: &[Graph]) -> Result<Self> {
        let mut max_abs = [0.0f64; 5];
        for g in train {
            for i in 0..g.num_nodes() {
                for (m, &c) in max_abs.iter_mut().zip(&NORMALIZED_COLUMNS) {
                    *m = m.max(g.features[(i, c)].abs());
                }
            }
        }
        if max_abs.iter().any(|&m| m <= 0.0 || !m.is_finite()) {
            return Err(Error::InsufficientSamples(format!("degenerate normalisation maxima {max_abs:?}")));
        }
        Ok(Self { max_abs })
    }

    pub fn apply(&self, g: &Graph) -> Graph {
        let mut x = g.features.clone();
        for i in 0..x.rows() {
            for (m, &c) in self.max_abs.iter().zip(&NORMALIZED_COLUMNS) {
                x[(i, c)] /= m;
            }
        }
        g.with_features(x)
    }

    /// `name=value` lines, one per normalised column.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (m, &c) in self.max_abs.iter().zip(&NORMALIZED_COLUMNS) {
            let _ = writeln!(s, "{}={m:?}", FEATURE_NAMES[c]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut max_abs = [f64::NAN; 5];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("bad stats line {line:?}")))?;
            let slot = NORMALIZED_COLUMNS
                .iter()
                .position(|&c| FEATURE_NAMES[c] == k.trim())
                .ok_or_else(|| Error::Format(format!("unknown stats key {k:?}")))?;
            max_abs[slot] = v.trim().parse().map_err(|_| Error::Format(format!("bad stats value {v:?}")))?;
        }
        if max_abs.iter().any(|m| m.is_nan()) {
            return Err(Error::Format("incomplete normalisation stats".into()));
        }
        Ok(Self { max_abs })
    }
}

/// Graphs plus the normalisation already applied to them, if any.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JetDataset {
    pub graphs: Vec<Graph>,
    pub normalization: Option<NormalizationStats>,
}

impl JetDataset {
    pub fn new(graphs: Vec<Graph>) -> Self {
        Self { graphs, normalization: None }
    }

    /// Applies `stats` once; a dataset that is already normalised is left as is.
    pub fn normalize(&mut self, stats: &NormalizationStats) {
        if self.normalization.is_some() {
            return;
        }
        for g in &mut self.graphs {
            *g = stats.apply(g);
        }
        self.normalization = Some(*stats);
    }
}

/// Index sets of a train/val/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Width of the particle-count bins used for stratification.
pub const COUNT_BIN_WIDTH: usize = 5;

/// Draws disjoint train/val/test subsets whose class and particle-count
/// composition tracks the source.
///
/// Items are grouped by `(label, count bin)` and shuffled within each group.
/// The `j`-th item of a group of size `c` gets the key `(j + u)/c` with `u`
/// a per-group offset; sorting by key interleaves the groups so every
/// contiguous run is proportional to the source to within about one item
/// per group. Splits are consecutive runs of that order.
pub fn split_and_subsample(graphs: &[Graph], sizes: [usize; 3], seed: u64) -> Result<Splits> {
    let keys: Vec<(u8, usize)> = graphs.iter().map(|g| (g.label, g.num_nodes() / COUNT_BIN_WIDTH)).collect();
    let order = stratified_order(&keys, seed);
    let total: usize = sizes.iter().sum();
    if total > order.len() {
        return Err(Error::InsufficientSamples(format!("requested {total} samples, {} available", order.len())));
    }
    let mut it = order.into_iter();
    let mut take = |n: usize| -> Vec<usize> { it.by_ref().take(n).collect() };
    Ok(Splits { train: take(sizes[0]), val: take(sizes[1]), test: take(sizes[2]) })
}

fn stratified_order<K: Ord + Clone>(keys: &[K], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k.clone()).or_default().push(i);
    }
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(keys.len());
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let u: f64 = rng.gen_range(0.0..1.0);
        let c = members.len() as f64;
        keyed.extend(members.iter().enumerate().map(|(j, &i)| ((j as f64 + u) / c, i)));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Synthetic two-class graph dataset with 10–40 nodes per graph and 13 features.
///
/// `separation = 0` gives identically distributed classes. As it grows, class
/// 1 graphs become spatially tighter (shorter edges), pick up a positive
/// correlation between features 7 and 8 (class 0: negative), and shift the
/// means of the low-variance features 9–12. Features 2–6 carry large
/// per-graph random offsets and no class information, so they dominate the
/// reconstruction error of an unsupervised autoencoder.
pub fn synth_dataset(n_samples: usize, separation: f64, seed: u64) -> Vec<Graph> {
    synth_dataset_sized(n_samples, separation, seed, 10, 40)
}

pub fn synth_dataset_sized(n_samples: usize, separation: f64, seed: u64, min_nodes: usize, max_nodes: usize) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|i| synth_graph(&mut rng, (i % 2) as u8, separation, min_nodes, max_nodes))
        .collect()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one draw per call keeps the stream simple to reason about.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn synth_graph<R: Rng + ?Sized>(rng: &mut R, label: u8, s: f64, min_nodes: usize, max_nodes: usize) -> Graph {
    let sign = if label == 1 { 1.0 } else { -1.0 };
    let n = rng.gen_range(min_nodes..=max_nodes);
    let spread = 0.4 * (1.0 - 0.15 * s * sign);
    let rho = (0.6 * s * sign).clamp(-0.95, 0.95);
    let shift = 0.06 * s * sign;
    let offsets: Vec<f64> = (0..5).map(|k| 1.5 * normal(rng) + if k < 2 { 0.4 * s * sign } else { 0.0 }).collect();

    let mut x = Matrix::zeros(n, NUM_FEATURES);
    for i in 0..n {
        let row = x.row_mut(i);
        row[0] = spread * normal(rng);
        row[1] = spread * normal(rng);
        for k in 0..5 {
            row[2 + k] = offsets[k] + 0.5 * normal(rng);
        }
        let (z1, z2) = (normal(rng), normal(rng));
        row[7] = 0.5 * z1;
        row[8] = 0.5 * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        for v in &mut row[9..13] {
            *v = shift + 0.3 * normal(rng);
        }
    }
    let deta: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let dphi: Vec<f64> = (0..n).map(|i| x[(i, 1)]).collect();
    build_graph(x, &deta, &dphi, label)
}

const JET_MAGIC: &[u8; 4] = b"GGCJ";
const JET_VERSION: u32 = 1;

/// Columnar jet container.
///
/// Layout (little-endian): magic `GGCJ`, `u32` version, `u64` jet count `J`,
/// `u64` particle count `P`, `J + 1` `u64` particle offsets, `J` `u8` labels,
/// then the columns `p_T`, `y`, `φ` as `P` `f64` each and `pdgid` as `P` `i32`.
pub fn write_jets<W: Write>(w: &mut W, jets: &[RawJet]) -> Result<()> {
    let total: usize = jets.iter().map(|j| j.particles.len()).sum();
    w.write_all(JET_MAGIC)?;
    w.write_all(&JET_VERSION.to_le_bytes())?;
    w.write_all(&(jets.len() as u64).to_le_bytes())?;
    w.write_all(&(total as u64).to_le_bytes())?;
    let mut off = 0u64;
    w.write_all(&off.to_le_bytes())?;
    for j in jets {
        off += j.particles.len() as u64;
        w.write_all(&off.to_le_bytes())?;
    }
    for j in jets {
        w.write_all(&[j.label])?;
    }
    let parts = || jets.iter().flat_map(|j| j.particles.iter());
    for col in [|p: &RawParticle| p.pt, |p: &RawParticle| p.y, |p: &RawParticle| p.phi] {
        for p in parts() {
            w.write_all(&col(p).to_le_bytes())?;
        }
    }
    for p in parts() {
        w.write_all(&p.pdgid.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_jets<R: Read>(r: &mut R) -> Result<Vec<RawJet>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = ByteCursor::new(&buf);
    if cur.take(4)? != JET_MAGIC {
        return Err(Error::Format("not a jet container (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != JET_VERSION {
        return Err(Error::Format(format!("unsupported jet container version {version}")));
    }
    let n_jets = cur.u64()? as usize;
    let n_parts = cur.u64()? as usize;
    let offsets: Vec<usize> = (0..=n_jets).map(|_| cur.u64().map(|v| v as usize)).collect::<Result<_>>()?;
    if offsets.last() != Some(&n_parts) || offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Format("inconsistent particle offsets".into()));
    }
    let labels = cur.take(n_jets)?.to_vec();
    let mut cols = [vec![], vec![], vec![]];
    for col in &mut cols {
        *col = (0..n_parts).map(|_| cur.f64()).collect::<Result<_>>()?;
    }
    let pid: Vec<i32> = (0..n_parts)
        .map(|_| cur.i32())
        .collect::<Result<_>>()?;
    if !cur.is_empty() {
        return Err(Error::Format("trailing bytes after jet columns".into()));
    }
    Ok((0..n_jets)
        .map(|j| RawJet {
            label: labels[j],
            particles: (offsets[j]..offsets[j + 1])
                .map(|k| RawParticle { pt: cols[0][k], y: cols[1][k], phi: cols[2][k], pdgid: pid[k] })
                .collect(),
        })
        .collect())
}

/// Plain-text jets: `jet <label>`, one `pt y phi pdgid` line per particle, `end`.
/// Blank lines and `#` comments are ignored.
pub fn parse_jets_text(text: &str) -> Result<Vec<RawJet>> {
    let mut jets = Vec::new();
    let mut current: Option<RawJet> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("line {}: {raw:?}", lineno + 1));
        let parts: Vec<&str> = line.split_whitespace().collect();
        match (parts[0], current.as_mut()) {
            ("jet", None) => {
                let label = parts.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                current = Some(RawJet { particles: vec![], label });
            }
            ("end", Some(_)) => jets.push(current.take().unwrap()),
            (_, Some(jet)) if parts.len() == 4 => {
                let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
                jet.particles.push(RawParticle {
                    pt: f(parts[0])?,
                    y: f(parts[1])?,
                    phi: f(parts[2])?,
                    pdgid: parts[3].parse().map_err(|_| bad())?,
                });
            }
            _ => return Err(bad()),
        }
    }
    if current.is_some() {
        return Err(Error::Format("unterminated jet block".into()));
    }
    Ok(jets)
}

pub fn jets_to_text(jets: &[RawJet]) -> String {
    let mut s = String::new();
    for j in jets {
        let _ = writeln!(s, "jet {}", j.label);
        for p in &j.particles {
            let _ = writeln!(s, "{:?} {:?} {:?} {}", p.pt, p.y, p.phi, p.pdgid);
        }
        s.push_str("end\n");
    }
    s
}
