use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

/// Floor substituted for a zero n-gram precision so the geometric mean stays
/// defined.
pub const BLEU_SMOOTHING: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Matched n-grams, each candidate n-gram clipped to its reference count.
fn clipped_matches(cand: &HashMap<&[String], usize>, reference: &HashMap<&[String], usize>) -> usize {
    cand.iter()
        .map(|(g, c)| (*c).min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

/// ROUGE-N recall: clipped overlapping n-grams over reference n-grams.
///
/// A reference shorter than `n` tokens has no n-grams and scores 0.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n-gram order must be positive".into()));
    }
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(Error::InvalidArgument("empty reference".into()));
    }
    let c = tokenize(candidate);
    let rc = ngram_counts(&r, n);
    let total: usize = rc.values().sum();
    if total == 0 {
        return Ok(0.0);
    }
    Ok(clipped_matches(&ngram_counts(&c, n), &rc) as f64 / total as f64)
}

/// Sentence BLEU with uniform weights up to `max_n` and the brevity penalty.
/// Zero precisions are floored at [`BLEU_SMOOTHING`].
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> Result<f64> {
    if max_n == 0 {
        return Err(Error::InvalidArgument("n-gram order must be positive".into()));
    }
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return Err(Error::InvalidArgument("BLEU needs non-empty candidate and reference".into()));
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cc = ngram_counts(&c, n);
        let total: usize = cc.values().sum();
        let matched = clipped_matches(&cc, &ngram_counts(&r, n));
        let p = if total == 0 { 0.0 } else { matched as f64 / total as f64 };
        log_sum += p.max(BLEU_SMOOTHING).ln();
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    Ok(bp * (log_sum / max_n as f64).exp())
}

/// Averaged generation scores, stored in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub count: usize,
}

impl GenerationScores {
    /// Mean of per-pair scores over `(candidate, reference)` pairs. An empty
    /// candidate scores 0 everywhere.
    pub fn mean<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut s = Self::default();
        for (cand, reference) in pairs {
            s.count += 1;
            s.rouge1 += rouge_n(cand, reference, 1)?;
            s.rouge2 += rouge_n(cand, reference, 2)?;
            if !tokenize(cand).is_empty() {
                s.bleu1 += bleu(cand, reference, 1)?;
                s.bleu2 += bleu(cand, reference, 2)?;
                s.bleu3 += bleu(cand, reference, 3)?;
            }
        }
        if s.count > 0 {
            let n = s.count as f64;
            s.rouge1 /= n;
            s.rouge2 /= n;
            s.bleu1 /= n;
            s.bleu2 /= n;
            s.bleu3 /= n;
        }
        Ok(s)
    }
}
