//! Synthetic minority oversampling (SMOTE).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub vector: Vec<f64>,
    pub label: u8,
}

impl FeaturePoint {
    pub fn new(vector: Vec<f64>, label: u8) -> Self {
        Self { vector, label }
    }
}

/// How a synthetic point was made: indices into the input slice and the
/// interpolation factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    pub parent: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    /// The input points in order, followed by the synthetic ones.
    pub points: Vec<FeaturePoint>,
    /// One entry per synthetic point, aligned with `points[original_count..]`.
    pub origins: Vec<SyntheticOrigin>,
    pub original_count: usize,
}

pub fn interpolate(parent: &[f64], neighbor: &[f64], lambda: f64) -> Vec<f64> {
    parent
        .iter()
        .zip(neighbor)
        .map(|(a, b)| a + lambda * (b - a))
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Indices (into `members`) of the `k` nearest other members of `members[i]`,
/// nearest first, ties broken by lower index.
fn nearest(points: &[FeaturePoint], members: &[usize], i: usize, k: usize) -> Vec<usize> {
    let anchor = &points[members[i]].vector;
    let mut others: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, &p)| (squared_distance(anchor, &points[p].vector), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Oversample the minority class until `minority / majority` reaches
/// `target_ratio` (synthetic count rounded down).
///
/// Parents are taken round-robin over the minority points; each synthetic
/// point interpolates toward one of the parent's `k` nearest minority
/// neighbours (Euclidean), picked uniformly, with `lambda ~ U[0, 1)`.
pub fn smote_upsample(points: &[FeaturePoint], k: usize, target_ratio: f64, seed: u64) -> Result<SmoteOutput> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if let Some(first) = points.first() {
        if points.iter().any(|p| p.vector.len() != first.vector.len()) {
            return Err(Error::Shape("feature points differ in dimension".into()));
        }
    }
    let ones: Vec<usize> = (0..points.len()).filter(|&i| points[i].label == 1).collect();
    let zeros: Vec<usize> = (0..points.len()).filter(|&i| points[i].label != 1).collect();
    let (minority, majority) = if ones.len() <= zeros.len() {
        (ones, zeros)
    } else {
        (zeros, ones)
    };
    if minority.len() < 2 {
        return Err(Error::Data(format!(
            "SMOTE needs at least 2 minority points, found {}",
            minority.len()
        )));
    }
    if k >= minority.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be below the minority count {}",
            minority.len()
        )));
    }
    let wanted = (target_ratio * majority.len() as f64).floor() as usize;
    let count = wanted.saturating_sub(minority.len());
    let label = points[minority[0]].label;

    let neighbours: Vec<Vec<usize>> = (0..minority.len())
        .map(|i| nearest(points, &minority, i, k))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = points.to_vec();
    let mut origins = Vec::with_capacity(count);
    for s in 0..count {
        let i = s % minority.len();
        let j = neighbours[i][rng.random_range(0..k)];
        let lambda: f64 = rng.random();
        let (parent, neighbor) = (minority[i], minority[j]);
        out.push(FeaturePoint::new(
            interpolate(&points[parent].vector, &points[neighbor].vector, lambda),
            label,
        ));
        origins.push(SyntheticOrigin {
            parent,
            neighbor,
            lambda,
        });
    }
    Ok(SmoteOutput {
        points: out,
        origins,
        original_count: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(minority: &[[f64; 2]], majority: usize) -> Vec<FeaturePoint> {
        let mut v: Vec<FeaturePoint> = minority.iter().map(|p| FeaturePoint::new(p.to_vec(), 1)).collect();
        v.extend((0..majority).map(|i| FeaturePoint::new(vec![10.0 + i as f64, 0.0], 0)));
        v
    }

    #[test]
    fn midpoint_interpolation() {
        assert_eq!(interpolate(&[0.0, 0.0], &[1.0, 1.0], 0.5), vec![0.5, 0.5]);
    }

    #[test]
    fn seeded_single_synthetic() {
        let out = smote_upsample(&pts(&[[0.0, 0.0], [1.0, 1.0]], 3), 1, 1.0, 42).unwrap();
        assert_eq!(out.origins.len(), 1);
        let o = out.origins[0];
        let p = &out.points[out.original_count].vector;
        assert_eq!(p, &interpolate(&out.points[o.parent].vector, &out.points[o.neighbor].vector, o.lambda));
        assert_eq!((o.parent, o.neighbor), (0, 1));
        assert!(p[0] == p[1] && (0.0..1.0).contains(&p[0]));
        // same seed, same point
        let again = smote_upsample(&pts(&[[0.0, 0.0], [1.0, 1.0]], 3), 1, 1.0, 42).unwrap();
        assert_eq!(again.points, out.points);
    }

    #[test]
    fn balances_counts() {
        let out = smote_upsample(&pts(&[[0.0, 0.0], [1.0, 1.0]], 6), 1, 1.0, 0).unwrap();
        assert_eq!(out.points.len(), 12);
        assert_eq!(out.points.iter().filter(|p| p.label == 1).count(), 6);
        let half = smote_upsample(&pts(&[[0.0, 0.0], [1.0, 1.0]], 7), 1, 0.5, 0).unwrap();
        assert_eq!(half.origins.len(), 1);
    }

    #[test]
    fn precondition_errors() {
        assert!(matches!(
            smote_upsample(&pts(&[[0.0, 0.0]], 4), 1, 1.0, 0),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            smote_upsample(&pts(&[[0.0, 0.0], [1.0, 0.0]], 4), 2, 1.0, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn originals_are_preserved() {
        let input = pts(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]], 9);
        let out = smote_upsample(&input, 2, 1.0, 5).unwrap();
        assert_eq!(&out.points[..input.len()], &input[..]);
    }
}
