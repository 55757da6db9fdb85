//! Reader for the hand-computed jet fixture references.

/// Per-particle feature rows and `(a, b, d_ab)` pairs for one jet.
pub struct GoldenJet {
    pub features: Vec<Vec<f64>>,
    pub distances: Vec<(usize, usize, f64)>,
}

pub fn parse_expected(text: &str) -> Vec<GoldenJet> {
    let mut out: Vec<GoldenJet> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok[0] {
            "jet" => out.push(GoldenJet { features: vec![], distances: vec![] }),
            "d" => out.last_mut().unwrap().distances.push((
                tok[1].parse().unwrap(),
                tok[2].parse().unwrap(),
                tok[3].parse().unwrap(),
            )),
            _ => out.last_mut().unwrap().features.push(tok.iter().map(|t| t.parse().unwrap()).collect()),
        }
    }
    out
}

/// Largest deviations of the pipeline from the references:
/// `(continuous features, identity flags, pairwise distances)`.
/// Any structural mismatch (counts, edge order) is reported as an error.
pub fn golden_deviation(jets_text: &str, expected_text: &str) -> Result<(f64, f64, f64), String> {
    let jets = ggc::jetdata::parse_jets_text(jets_text).map_err(|e| e.to_string())?;
    let expected = parse_expected(expected_text);
    if jets.len() != expected.len() {
        return Err(format!("{} jets against {} references", jets.len(), expected.len()));
    }
    let (mut cont, mut flags, mut dist) = (0.0f64, 0.0f64, 0.0f64);
    for (k, (jet, exp)) in jets.iter().zip(&expected).enumerate() {
        let g = ggc::jetdata::jet_to_graph(jet).map_err(|e| e.to_string())?;
        if g.num_nodes() != exp.features.len() {
            return Err(format!("jet {k}: {} nodes, expected {}", g.num_nodes(), exp.features.len()));
        }
        for (i, row) in exp.features.iter().enumerate() {
            for (f, &want) in row.iter().enumerate() {
                let gap = (g.features[(i, f)] - want).abs();
                if f >= 7 {
                    flags = flags.max(gap);
                } else {
                    cont = cont.max(gap);
                }
            }
        }
        let und: Vec<(usize, usize, f64)> = g.undirected_edges().collect();
        if und.len() != exp.distances.len() {
            return Err(format!("jet {k}: {} pairs, expected {}", und.len(), exp.distances.len()));
        }
        for (&(a, b, w), &(ea, eb, ew)) in und.iter().zip(&exp.distances) {
            if (a, b) != (ea, eb) {
                return Err(format!("jet {k}: pair ({a},{b}) where ({ea},{eb}) expected"));
            }
            dist = dist.max((w - ew).abs());
        }
    }
    Ok((cont, flags, dist))
}
