//! Slow, direct reimplementations of the metrics, used as test oracles.

use std::collections::BTreeMap;

use spc_core::text::tokenize;

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

/// Greedily pair each n-gram of `from` with an unused identical n-gram of
/// `into`; the number of pairs equals the clipped match count.
fn matched(from: &[Vec<String>], into: &[Vec<String>]) -> usize {
    let mut used = vec![false; into.len()];
    let mut hits = 0;
    for g in from {
        if let Some(j) = (0..into.len()).find(|&j| !used[j] && &into[j] == g) {
            used[j] = true;
            hits += 1;
        }
    }
    hits
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let r = ngrams(&tokenize(reference), n);
    if r.is_empty() {
        return 0.0;
    }
    matched(&r, &ngrams(&tokenize(candidate), n)) as f64 / r.len() as f64
}

pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    let mut product = 1.0f64;
    for n in 1..=max_n {
        let cg = ngrams(&c, n);
        let p = if cg.is_empty() {
            0.0
        } else {
            matched(&cg, &ngrams(&r, n)) as f64 / cg.len() as f64
        };
        product *= if p == 0.0 { 1e-9 } else { p };
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * product.powf(1.0 / max_n as f64)
}

/// Weighted F1 from explicit per-label counting loops.
pub fn weighted_f1(preds: &[usize], golds: &[usize]) -> f64 {
    let mut labels: Vec<usize> = preds.iter().chain(golds).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let mut num = 0.0;
    let mut den = 0.0;
    for l in labels {
        let tp = preds.iter().zip(golds).filter(|(p, g)| **p == l && **g == l).count() as f64;
        let predicted = preds.iter().filter(|p| **p == l).count() as f64;
        let support = golds.iter().filter(|g| **g == l).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        num += support * f1;
        den += support;
    }
    num / den
}

/// Nominal alpha by enumerating value pairs. `items[u]` holds the labels
/// given to unit `u`; units with fewer than two labels are dropped.
pub fn alpha(items: &[Vec<String>]) -> f64 {
    let units: Vec<&Vec<String>> = items.iter().filter(|u| u.len() >= 2).collect();
    let all: Vec<&String> = units.iter().flat_map(|u| u.iter()).collect();
    let n = all.len() as f64;
    let mut observed = 0.0;
    for u in &units {
        let m = u.len() as f64;
        let mut disagreeing = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    disagreeing += 1.0;
                }
            }
        }
        observed += disagreeing / (m - 1.0);
    }
    let mut expected = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j && all[i] != all[j] {
                expected += 1.0;
            }
        }
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - 1.0));
    if d_e == 0.0 {
        1.0
    } else {
        1.0 - d_o / d_e
    }
}

/// Build the per-unit label lists from an annotator -> labels table.
pub fn units(table: &BTreeMap<String, Vec<Option<String>>>, items: usize) -> Vec<Vec<String>> {
    (0..items)
        .map(|i| table.values().filter_map(|l| l[i].clone()).collect())
        .collect()
}
