//! ROC curves, AUC and the k-fold test protocol.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct scores, highest first. Equal scores
/// move together as one diagonal step, which the trapezoid rule credits with
/// half a pair.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch { op: "roc_auc", left: (scores.len(), 1), right: (labels.len(), 1) });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Trapezoid in count space, normalised once at the end.
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve { points, auc: auc / (pos as f64 * neg as f64) })
}

/// Mean and spread of per-fold AUCs.
#[derive(Debug, Clone, PartialEq)]
pub struct KFoldReport {
    /// `None` for folds missing a class; those are excluded from the summary.
    pub fold_aucs: Vec<Option<f64>>,
    pub fold_sizes: Vec<usize>,
    pub mean: f64,
    /// Sample standard deviation over the valid folds; 0 when fewer than two.
    pub std: f64,
    pub warnings: Vec<String>,
}

impl KFoldReport {
    pub fn valid_folds(&self) -> usize {
        self.fold_aucs.iter().flatten().count()
    }
}

/// Shuffles once with `seed`, cuts `k` contiguous near-equal folds and scores each separately.
pub fn kfold_test(scores: &[f64], labels: &[u8], k: usize, seed: u64) -> Result<KFoldReport> {
    if k == 0 || k > scores.len() {
        return Err(Error::InsufficientSamples(format!("{k} folds over {} samples", scores.len())));
    }
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch { op: "kfold_test", left: (scores.len(), 1), right: (labels.len(), 1) });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = idx.len();
    let mut fold_aucs = Vec::with_capacity(k);
    let mut fold_sizes = Vec::with_capacity(k);
    let mut warnings = Vec::new();
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let fold = &idx[start..start + size];
        start += size;
        let s: Vec<f64> = fold.iter().map(|&i| scores[i]).collect();
        let y: Vec<u8> = fold.iter().map(|&i| labels[i]).collect();
        fold_sizes.push(size);
        match roc_auc(&s, &y) {
            Ok(c) => fold_aucs.push(Some(c.auc)),
            Err(Error::SingleClass) => {
                let msg = format!("fold {f} has a single class and was excluded");
                log::warn!("{msg}");
                warnings.push(msg);
                fold_aucs.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let valid: Vec<f64> = fold_aucs.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::SingleClass);
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let std = if valid.len() > 1 {
        (valid.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (valid.len() - 1) as f64).sqrt()
    } else {
        warnings.push("standard deviation undefined with one fold; reported as 0".into());
        0.0
    };
    Ok(KFoldReport { fold_aucs, fold_sizes, mean, std, warnings })
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in &curve.points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

/// One row of a results table: section (paradigm), model name, AUC mean and std.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub section: String,
    pub model: String,
    pub auc_mean: f64,
    pub auc_std: f64,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("section,model,test_auc_mean,test_auc_std\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.4},{:.4}", r.section, r.model, r.auc_mean, r.auc_std);
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// ROC plot with one polyline per curve and the random-classifier diagonal.
pub fn roc_svg(title: &str, curves: &[(String, RocCurve)]) -> String {
    let (w, h, m) = (480.0, 480.0, 50.0);
    let px = |x: f64| m + x * (w - 2.0 * m);
    let py = |y: f64| h - m - y * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for t in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{t:.1}</text>"#, px(t), h - m + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{t:.1}</text>"#, m - 6.0, py(t) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">False positive rate</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">True positive rate</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="5,4"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let mut legend_y = m + 16.0;
    let _ = writeln!(s, r#"<text x="{}" y="{}" fill="gray">Random (AUC = 0.5)</text>"#, px(0.42), py(0.0) - 8.0 - 18.0 * curves.len() as f64);
    for (k, (name, c)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = c.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{legend_y}" fill="{color}">{} (AUC = {:.4})</text>"#,
            px(0.42),
            escape(name),
            c.auc
        );
        legend_y += 18.0;
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let c = roc_auc(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.1], &[0, 0, 1, 1]).unwrap().auc, 0.0);
    }

    #[test]
    fn all_tied_is_half() {
        assert_eq!(roc_auc(&[0.5; 6], &[1, 0, 1, 0, 0, 1]).unwrap().auc, 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn fold_sizes_even() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let r = kfold_test(&scores, &labels, 5, 42).unwrap();
        assert_eq!(r.fold_sizes, vec![20; 5]);
        let r = kfold_test(&scores[..13], &labels[..13], 5, 42).unwrap();
        assert_eq!(r.fold_sizes, vec![3, 3, 3, 2, 2]);
    }

    #[test]
    fn one_fold_is_whole_set() {
        let scores = [0.1, 0.7, 0.4, 0.8, 0.35];
        let labels = [0, 1, 0, 1, 1];
        let r = kfold_test(&scores, &labels, 1, 7).unwrap();
        assert_eq!(r.mean, roc_auc(&scores, &labels).unwrap().auc);
        assert_eq!(r.std, 0.0);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn single_class_fold_flagged() {
        // Three folds of two: some seed leaves a fold with negatives only.
        let scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let labels = [1, 0, 0, 0, 0, 1];
        let mut found = false;
        for seed in 0..50 {
            let r = kfold_test(&scores, &labels, 3, seed).unwrap_or_else(|_| panic!("seed {seed}"));
            if r.fold_aucs.iter().any(Option::is_none) {
                assert!(r.warnings.iter().any(|w| w.contains("single class")));
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn csv_and_svg_render() {
        let c = roc_auc(&[0.9, 0.2, 0.6], &[1, 0, 0]).unwrap();
        let csv = roc_csv(&c);
        assert!(csv.starts_with("fpr,tpr\n0,0\n"));
        let svg = roc_svg("Test", &[("a<b".into(), c)]);
        assert!(svg.contains("a&lt;b") && svg.ends_with("</svg>\n"));
    }
}
