//! Benchmark scoring against a ground-truth leak list.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `(app, source, sink)`, with APIs as `Class.method`.
pub type LeakTriple = (String, String, String);

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed ground truth at {path}:{line}: {reason}")]
    MalformedGroundTruth { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthEntry {
    app: String,
    source: String,
    sink: String,
}

/// Reads a ground-truth file: one `{"app", "source", "sink"}` record per line.
pub fn read_ground_truth(path: &Path) -> Result<BTreeSet<LeakTriple>, ScoreError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScoreError::Io { path: path.to_path_buf(), source })?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: TruthEntry = serde_json::from_str(line).map_err(|e| ScoreError::MalformedGroundTruth {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.insert((e.app, e.source, e.sink));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub missing: Vec<LeakTriple>,
    pub unexpected: Vec<LeakTriple>,
}

/// Precision, recall and F1. A zero denominator counts as 1.0 for
/// precision and recall, so a corpus with nothing to find and nothing
/// found scores perfectly.
pub fn metrics(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

pub fn score(reported: &BTreeSet<LeakTriple>, truth: &BTreeSet<LeakTriple>) -> BenchmarkScore {
    let tp = reported.intersection(truth).count();
    let unexpected: Vec<LeakTriple> = reported.difference(truth).cloned().collect();
    let missing: Vec<LeakTriple> = truth.difference(reported).cloned().collect();
    let (precision, recall, f1) = metrics(tp, unexpected.len(), missing.len());
    BenchmarkScore { tp, fp: unexpected.len(), fn_: missing.len(), precision, recall, f1, missing, unexpected }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_conventions() {
        assert_eq!(metrics(25, 0, 0), (1.0, 1.0, 1.0));
        assert_eq!(metrics(0, 0, 0), (1.0, 1.0, 1.0));
        let (p, _, _) = metrics(20, 53, 0);
        assert!((p - 20.0 / 73.0).abs() < 1e-12);
        // the published figure truncates to one decimal
        assert_eq!((p * 1000.0).floor() / 10.0, 27.3);
        assert_eq!(metrics(0, 3, 2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn set_comparison() {
        let t = |a: &str| (a.to_string(), "S.src".to_string(), "K.sink".to_string());
        let reported: BTreeSet<_> = [t("a"), t("b")].into();
        let truth: BTreeSet<_> = [t("b"), t("c")].into();
        let s = score(&reported, &truth);
        assert_eq!((s.tp, s.fp, s.fn_), (1, 1, 1));
        assert_eq!(s.missing, vec![t("c")]);
        assert_eq!(s.unexpected, vec![t("a")]);
    }
}
