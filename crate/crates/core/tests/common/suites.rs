//! Fixture sweeps shared by the focused tests and the acceptance run.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spc_core::corpus::{krippendorff_alpha, AnnotationSet};
use spc_core::metrics::{bleu, rouge_n, weighted_f1};

use super::oracles;

pub const TEXT_PAIRS: [(&str, &str); 12] = [
    ("teaches aerobics", "Teaches aerobics"),
    ("aerobics teacher", "teaches aerobics"),
    ("the the the the", "the cat is on the mat"),
    ("the cat sat on the mat", "the cat is on the mat"),
    ("legs on a poster", "Her legs are on the new James Bond poster"),
    ("parties way too much", "Parties a lot"),
    ("sister", "Sister Ursula"),
    ("a b c d e f g", "a b c"),
    ("works at the museum of natural history", "Paleontologist at the museum"),
    ("loves dinosaurs , dinosaurs !", "Loves dinosaurs"),
    ("x y x y x", "x y x y"),
    ("completely unrelated words", "Grew up on Long Island"),
];

const WORDS: [&str; 7] = ["a", "b", "c", "the", "cat", "mat", "on"];

fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..=8);
    (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Fixed pairs plus random ones over a tiny vocabulary (lots of overlap).
pub fn text_pairs() -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pairs: Vec<(String, String)> = TEXT_PAIRS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    for _ in 0..40 {
        pairs.push((random_sentence(&mut rng), random_sentence(&mut rng)));
    }
    pairs
}

/// `(metric, fixtures, worst |library - oracle|)`.
pub type Sweep = (&'static str, usize, f64);

pub fn generation_sweeps() -> Vec<Sweep> {
    let pairs = text_pairs();
    let mut out = Vec::new();
    for n in 1..=2 {
        let worst = pairs
            .iter()
            .map(|(c, r)| (rouge_n(c, r, n).unwrap() - oracles::rouge_n(c, r, n)).abs())
            .fold(0.0, f64::max);
        out.push((["rouge-1", "rouge-2"][n - 1], pairs.len(), worst));
    }
    for n in 1..=3 {
        let worst = pairs
            .iter()
            .map(|(c, r)| (bleu(c, r, n).unwrap() - oracles::bleu(c, r, n)).abs())
            .fold(0.0, f64::max);
        out.push((["bleu-1", "bleu-2", "bleu-3"][n - 1], pairs.len(), worst));
    }
    out
}

pub fn weighted_f1_sweep() -> Sweep {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let fixtures = 30;
    for _ in 0..fixtures {
        let n = rng.random_range(1..40);
        let k = rng.random_range(2..=5);
        let golds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = golds
            .iter()
            .map(|g| if rng.random_bool(0.5) { *g } else { rng.random_range(0..k) })
            .collect();
        let lib = weighted_f1(&preds, &golds).unwrap();
        worst = worst.max((lib - oracles::weighted_f1(&preds, &golds)).abs());
    }
    ("weighted f1", fixtures, worst)
}

/// Random annotation table with some gaps.
pub fn random_annotations(rng: &mut ChaCha8Rng, items: usize) -> (Vec<String>, BTreeMap<String, Vec<Option<String>>>) {
    let annotators = rng.random_range(2..=4);
    let cats = rng.random_range(2..=4);
    let truth: Vec<usize> = (0..items).map(|_| rng.random_range(0..cats)).collect();
    let mut table = BTreeMap::new();
    for a in 0..annotators {
        let labels: Vec<Option<String>> = truth
            .iter()
            .map(|t| {
                if rng.random_bool(0.1) {
                    None
                } else if rng.random_bool(0.75) {
                    Some(format!("c{t}"))
                } else {
                    Some(format!("c{}", rng.random_range(0..cats)))
                }
            })
            .collect();
        table.insert(format!("ann{a}"), labels);
    }
    // Item 0 always pairable.
    for labels in table.values_mut() {
        if labels[0].is_none() {
            labels[0] = Some("c0".into());
        }
    }
    ((0..items).map(|i| format!("u{i}")).collect(), table)
}

pub fn alpha_sweep() -> Sweep {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let fixtures = 20;
    for f in 0..fixtures {
        let items = if f == 0 { 50 } else { rng.random_range(3..30) };
        let (ids, table) = random_annotations(&mut rng, items);
        let lib = krippendorff_alpha(&AnnotationSet::new(ids, table.clone()).unwrap()).unwrap();
        worst = worst.max((lib - oracles::alpha(&oracles::units(&table, items))).abs());
    }
    ("krippendorff alpha", fixtures, worst)
}

/// The two-annotator, four-item table with alpha 8/15.
pub fn eight_fifteenths() -> AnnotationSet {
    let row = |xs: [&str; 4]| xs.iter().map(|x| Some(x.to_string())).collect::<Vec<_>>();
    let mut table = BTreeMap::new();
    table.insert("A".to_string(), row(["y", "y", "n", "n"]));
    table.insert("B".to_string(), row(["y", "n", "n", "n"]));
    AnnotationSet::new((1..=4).map(|i| format!("u{i}")).collect(), table).unwrap()
}

/// Result of checking one SMOTE run against brute-force geometry.
#[derive(Debug)]
pub struct SmoteCheck {
    pub synthetic: usize,
    pub worst_residual: f64,
    pub neighbours_verified: bool,
    pub balance_exact: bool,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Distance from `p` to the segment `a`-`b`.
pub fn segment_residual(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (p.iter().zip(a).zip(&ab).map(|((p, a), d)| (p - a) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    let closest: Vec<f64> = a.iter().zip(&ab).map(|(a, d)| a + t * d).collect();
    dist2(p, &closest).sqrt()
}

pub fn smote_check(seed: u64) -> SmoteCheck {
    use spc_core::discovery::{smote_upsample, FeaturePoint};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=6);
    let minority = rng.random_range(3..12);
    let majority = rng.random_range(minority + 1..60);
    let k = rng.random_range(1..minority);
    let ratio = [1.0, 0.8, 0.5][rng.random_range(0..3)];
    let mut points = Vec::new();
    for i in 0..minority + majority {
        let label = u8::from(i < minority);
        let v = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        points.push(FeaturePoint::new(v, label));
    }
    // Interleave so the minority is not a prefix.
    points.sort_by_key(|p| (p.vector[0] * 1e6) as i64);

    let out = smote_upsample(&points, k, ratio, seed).unwrap();
    let minority_idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].label == 1).collect();
    let mut worst = 0.0f64;
    let mut verified = true;
    for (s, o) in out.origins.iter().enumerate() {
        let p = &out.points[out.original_count + s];
        verified &= p.label == 1 && points[o.parent].label == 1 && points[o.neighbor].label == 1;
        worst = worst.max(segment_residual(&p.vector, &points[o.parent].vector, &points[o.neighbor].vector));
        // The neighbour must be no farther than the k-th nearest other
        // minority point of the parent.
        let mut d: Vec<f64> = minority_idx
            .iter()
            .filter(|&&j| j != o.parent)
            .map(|&j| dist2(&points[o.parent].vector, &points[j].vector))
            .collect();
        d.sort_by(f64::total_cmp);
        verified &= o.neighbor != o.parent && dist2(&points[o.parent].vector, &points[o.neighbor].vector) <= d[k - 1];
    }
    let final_minority = out.points.iter().filter(|p| p.label == 1).count();
    let wanted = ((ratio * majority as f64).floor() as usize).max(minority);
    SmoteCheck {
        synthetic: out.origins.len(),
        worst_residual: worst,
        neighbours_verified: verified,
        balance_exact: final_minority == wanted && out.points.len() == points.len() + out.origins.len(),
    }
}

/// `|boundary_loss - mean |dist - softplus(raw)||` on one random batch.
pub fn boundary_closed_form_gap(seed: u64) -> f64 {
    use spc_core::neural::Tensor;
    use spc_core::typeid::{boundary_loss, BoundaryModel};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=12);
    let n = rng.random_range(1..=32);
    let c: Vec<f64> = (0..5 * d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let raw: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
    let z: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
    let b = BoundaryModel::new(Tensor::new(vec![5, d], c.clone()).unwrap(), Tensor::vector(raw.clone())).unwrap();
    let lib = boundary_loss(&Tensor::new(vec![n, d], z.clone()).unwrap(), &y, &b).unwrap();
    let mut total = 0.0;
    for i in 0..n {
        let k = y[i];
        let dist = (0..d).map(|j| (z[i * d + j] - c[k * d + j]).powi(2)).sum::<f64>().sqrt();
        let radius = (1.0 + raw[k].exp()).ln();
        total += (dist - radius).abs();
    }
    (lib - total / n as f64).abs()
}
