use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision, recall and F1 for one class. Any `0/0` is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Positive-class precision, recall and F1.
pub fn prf1(preds: &[bool], golds: &[bool]) -> Result<Prf> {
    if preds.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (p, g) in preds.iter().zip(golds) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    #[serde(flatten)]
    pub prf: Prf,
    pub support: usize,
}

/// Per-class scores. A `None` prediction never matches any class, so it
/// counts as a miss for the gold class without being a false positive
/// anywhere.
pub fn per_class_scores<T: Ord + Clone>(preds: &[Option<T>], golds: &[T]) -> Result<BTreeMap<T, ClassScore>> {
    if preds.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let mut counts: BTreeMap<T, (usize, usize, usize)> = BTreeMap::new();
    for (p, g) in preds.iter().zip(golds) {
        match p {
            Some(p) if p == g => counts.entry(g.clone()).or_default().0 += 1,
            Some(p) => {
                counts.entry(p.clone()).or_default().1 += 1;
                counts.entry(g.clone()).or_default().2 += 1;
            }
            None => counts.entry(g.clone()).or_default().2 += 1,
        }
    }
    Ok(counts
        .into_iter()
        .map(|(label, (tp, fp, fn_))| {
            (
                label,
                ClassScore {
                    prf: Prf::from_counts(tp, fp, fn_),
                    support: tp + fn_,
                },
            )
        })
        .collect())
}

/// Support-weighted mean of per-class F1 over a score table.
pub fn weighted_from_scores<T>(scores: &BTreeMap<T, ClassScore>) -> f64 {
    let total: usize = scores.values().map(|s| s.support).sum();
    if total == 0 {
        return 0.0;
    }
    scores.values().map(|s| s.support as f64 * s.prf.f1).sum::<f64>() / total as f64
}

/// Support-weighted F1, `sum_k support_k * F1_k / sum_k support_k`.
pub fn weighted_f1<T: Ord + Clone>(preds: &[T], golds: &[T]) -> Result<f64> {
    if golds.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let wrapped: Vec<Option<T>> = preds.iter().cloned().map(Some).collect();
    Ok(weighted_from_scores(&per_class_scores(&wrapped, golds)?))
}

/// Counts indexed `[gold][predicted]` over an ordered label list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<usize> {
        (0..self.labels.len()).map(|i| self.counts[i][i]).collect()
    }

    /// Text table, gold labels down the side and predictions across the top.
    pub fn render(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(String::len)
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(4)
            .max(9);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "gold\\pred");
        for l in &self.labels {
            let _ = write!(out, " {l:>width$}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{l:<width$}");
            for c in row {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Confusion matrix over `labels`; every prediction and gold must be listed.
pub fn confusion<T: PartialEq + fmt::Display>(preds: &[T], golds: &[T], labels: &[T]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let pos = |x: &T| {
        labels
            .iter()
            .position(|l| l == x)
            .ok_or_else(|| Error::InvalidArgument(format!("label {x} is not in the label list")))
    };
    let k = labels.len();
    let mut counts = vec![vec![0; k]; k];
    for (p, g) in preds.iter().zip(golds) {
        counts[pos(g)?][pos(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.iter().map(ToString::to_string).collect(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let g = [true, false, true];
        let s = prf1(&g, &g).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_over_zero_is_zero() {
        let s = prf1(&[false, false], &[false, false]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(prf1(&[true], &[true, false]).is_err());
        assert!(weighted_f1(&[1, 2], &[1]).is_err());
        assert!(confusion(&[1], &[1, 2], &[1, 2]).is_err());
    }

    #[test]
    fn weighted_f1_hand_case() {
        // supports (3, 1) with F1 (1, 0); the miss goes to a label with no
        // support so class 0 keeps perfect precision
        let golds = [0, 0, 0, 1];
        let preds = [0, 0, 0, 2];
        let w = weighted_f1(&preds, &golds).unwrap();
        assert!((w - 0.75).abs() < 1e-12);
        assert_eq!(weighted_f1(&golds, &golds).unwrap(), 1.0);
    }

    #[test]
    fn missing_predictions_count_as_misses() {
        let s = per_class_scores(&[Some(1), None], &[1, 1]).unwrap();
        assert_eq!(s[&1].support, 2);
        assert_eq!(s[&1].prf.precision, 1.0);
        assert_eq!(s[&1].prf.recall, 0.5);
    }

    #[test]
    fn confusion_rejects_unknown_label() {
        assert!(confusion(&[3], &[1], &[1, 2]).is_err());
        let m = confusion(&[1, 2, 2], &[1, 2, 1], &[1, 2]).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(m.row_sums(), vec![2, 1]);
        assert_eq!(m.total(), 3);
    }
}
