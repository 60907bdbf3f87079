use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::depgraph::GraphMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityBucket {
    Simple,
    Moderate,
    Complex,
    VeryComplex,
}

impl ComplexityBucket {
    pub const ALL: [ComplexityBucket; 4] = [
        ComplexityBucket::Simple,
        ComplexityBucket::Moderate,
        ComplexityBucket::Complex,
        ComplexityBucket::VeryComplex,
    ];

    pub fn of(prompt: &str) -> Self {
        match prompt.split_whitespace().count() {
            n if n < 8 => ComplexityBucket::Simple,
            n if n < 15 => ComplexityBucket::Moderate,
            n if n < 25 => ComplexityBucket::Complex,
            _ => ComplexityBucket::VeryComplex,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ComplexityBucket::Simple => "simple",
            ComplexityBucket::Moderate => "moderate",
            ComplexityBucket::Complex => "complex",
            ComplexityBucket::VeryComplex => "very_complex",
        }
    }
}

/// One labeled verifier decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labeled {
    pub pass: bool,
    pub exec_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierQuality {
    pub n: usize,
    pub passed: usize,
    pub executable: usize,
    pub true_pass: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub false_positive_rate: Option<f64>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Positive class is a verifier pass; the label is whether the program
/// executes without error.
pub fn verifier_quality(records: &[Labeled]) -> VerifierQuality {
    let passed = records.iter().filter(|r| r.pass).count();
    let executable = records.iter().filter(|r| r.exec_ok).count();
    let true_pass = records.iter().filter(|r| r.pass && r.exec_ok).count();
    let precision = ratio(true_pass, passed);
    let recall = ratio(true_pass, executable);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    VerifierQuality {
        n: records.len(),
        passed,
        executable,
        true_pass,
        precision,
        recall,
        f1,
        false_positive_rate: ratio(passed - true_pass, passed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub theta: f64,
    pub precision: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub recall: Option<f64>,
    /// Share of verifier passes that survive the filter.
    pub retained: Option<f64>,
}

/// Recompute verifier quality per threshold, counting passes with
/// `u > theta` as failures.
pub fn uncertainty_eval(records: &[(Labeled, f64)], thetas: &[f64]) -> Vec<ThetaRow> {
    let passes = records.iter().filter(|(l, _)| l.pass).count();
    thetas
        .iter()
        .map(|&theta| {
            let filtered: Vec<Labeled> =
                records.iter().map(|(l, u)| Labeled { pass: l.pass && !(*u > theta), exec_ok: l.exec_ok }).collect();
            let q = verifier_quality(&filtered);
            ThetaRow {
                theta,
                precision: q.precision,
                false_positive_rate: q.false_positive_rate,
                recall: q.recall,
                retained: ratio(q.passed, passes),
            }
        })
        .collect()
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_sweep(spec: &str) -> Option<Vec<f64>> {
    let parts: Vec<f64> = spec.split(':').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    let [start, stop, step] = parts[..] else { return None };
    if !(step > 0.0) || stop < start {
        return None;
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Some((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphRow {
    pub n: usize,
    pub node_p: f64,
    pub node_r: f64,
    pub node_f1: f64,
    pub edge_p: f64,
    pub edge_r: f64,
    pub edge_f1: f64,
    pub exact_match_rate: f64,
}

/// Mean graph metrics per complexity bucket; buckets without records map
/// to `None`.
pub fn graph_accuracy(records: &[(ComplexityBucket, GraphMetrics)]) -> BTreeMap<ComplexityBucket, Option<GraphRow>> {
    ComplexityBucket::ALL
        .iter()
        .map(|&b| {
            let rows: Vec<&GraphMetrics> = records.iter().filter(|(k, _)| *k == b).map(|(_, m)| m).collect();
            let n = rows.len();
            let mean = |f: fn(&GraphMetrics) -> f64| rows.iter().map(|m| f(m)).sum::<f64>() / n as f64;
            let row = (n > 0).then(|| GraphRow {
                n,
                node_p: mean(|m| m.node_p),
                node_r: mean(|m| m.node_r),
                node_f1: mean(|m| m.node_f1),
                edge_p: mean(|m| m.edge_p),
                edge_r: mean(|m| m.edge_r),
                edge_f1: mean(|m| m.edge_f1),
                exact_match_rate: mean(|m| if m.exact_match { 1.0 } else { 0.0 }),
            });
            (b, row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(pass: bool, exec_ok: bool) -> Labeled {
        Labeled { pass, exec_ok }
    }

    #[test]
    fn buckets() {
        assert_eq!(ComplexityBucket::of("count the nets"), ComplexityBucket::Simple);
        assert_eq!(ComplexityBucket::of("a b c d e f g h"), ComplexityBucket::Moderate);
        assert_eq!(ComplexityBucket::of(&"w ".repeat(15)), ComplexityBucket::Complex);
        assert_eq!(ComplexityBucket::of(&"w ".repeat(25)), ComplexityBucket::VeryComplex);
    }

    #[test]
    fn hand_confusion() {
        // 8 passes, 6 of them run; one failed program also runs
        let mut r = vec![lab(true, true); 6];
        r.extend([lab(true, false), lab(true, false), lab(false, true), lab(false, false)]);
        let q = verifier_quality(&r);
        assert_eq!(q.precision, Some(0.75));
        assert_eq!(q.recall, Some(6.0 / 7.0));
        assert_eq!(q.false_positive_rate, Some(0.25));
        let f1 = 2.0 * 0.75 * (6.0 / 7.0) / (0.75 + 6.0 / 7.0);
        assert!((q.f1.unwrap() - f1).abs() < 1e-12);
    }

    #[test]
    fn degenerate_quality() {
        let q = verifier_quality(&[lab(true, true), lab(true, true)]);
        assert_eq!((q.precision, q.recall), (Some(1.0), Some(1.0)));
        let q = verifier_quality(&[lab(false, true)]);
        assert_eq!(q.precision, None);
        assert_eq!(q.recall, Some(0.0));
        assert_eq!(q.false_positive_rate, None);
        let q = verifier_quality(&[]);
        assert_eq!((q.precision, q.recall, q.f1), (None, None, None));
    }

    #[test]
    fn sweep() {
        assert_eq!(parse_sweep("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_sweep("0:1:0.05").unwrap().len(), 21);
        assert!(parse_sweep("1:0:0.1").is_none());
        assert!(parse_sweep("0:1").is_none());
    }

    #[test]
    fn theta_filtering() {
        let recs = vec![(lab(true, true), 0.1), (lab(true, false), 0.6), (lab(false, false), 0.9)];
        let rows = uncertainty_eval(&recs, &[1.0, 0.5, 0.0]);
        assert_eq!(rows[0].precision, Some(0.5));
        assert_eq!(rows[0].retained, Some(1.0));
        assert_eq!(rows[1].precision, Some(1.0));
        assert_eq!(rows[1].false_positive_rate, Some(0.0));
        assert_eq!(rows[2].retained, Some(0.0));
        assert_eq!(rows[2].precision, None);
    }
}
