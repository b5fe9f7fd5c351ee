//! Class centroids with learned radii, trained with boundary loss.

use serde::{Deserialize, Serialize};

use crate::corpus::PersonaType;
use crate::error::{Error, Result};
use crate::neural::{sigmoid, softplus, Adam, AdamConfig, ParamStore, Tensor};

const RADII: &str = "raw_radii";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryModel {
    centroids: Tensor,
    raw_radii: Tensor,
}

impl BoundaryModel {
    /// `centroids` is `[K, d]` and `raw_radii` `[K]`, with `K` the number of
    /// persona types.
    pub fn new(centroids: Tensor, raw_radii: Tensor) -> Result<Self> {
        let k = PersonaType::COUNT;
        if centroids.ndim() != 2 || centroids.rows() != k {
            return Err(Error::Shape(format!(
                "centroids must be [{k}, d], got {:?}",
                centroids.shape()
            )));
        }
        if raw_radii.shape() != [k] {
            return Err(Error::Shape(format!("raw radii must be [{k}], got {:?}", raw_radii.shape())));
        }
        if !centroids.is_finite() || !raw_radii.is_finite() {
            return Err(Error::InvalidArgument("boundary parameters must be finite".into()));
        }
        Ok(Self { centroids, raw_radii })
    }

    pub fn centroids(&self) -> &Tensor {
        &self.centroids
    }

    pub fn raw_radii(&self) -> &Tensor {
        &self.raw_radii
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    /// Effective radii `softplus(raw)`.
    pub fn radii(&self) -> Vec<f64> {
        self.raw_radii.data().iter().map(|r| softplus(*r)).collect()
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        self.centroids.row(k)
    }

    /// Whether `z` lies within the boundary of class `label`.
    pub fn contains(&self, z: &[f64], label: usize) -> bool {
        distance(z, self.centroid(label)) <= softplus(self.raw_radii.data()[label])
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Boundary loss and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoss {
    pub loss: f64,
    /// `[N, d]`
    pub grad_z: Tensor,
    /// `[K, d]`
    pub grad_centroids: Tensor,
    /// `[K]`
    pub grad_raw_radii: Tensor,
}

fn check_batch(z: &Tensor, labels: &[usize], boundaries: &BoundaryModel) -> Result<()> {
    if z.ndim() != 2 || z.rows() == 0 {
        return Err(Error::Shape("representations must be a non-empty [N, d] matrix".into()));
    }
    if z.rows() != labels.len() {
        return Err(Error::Shape(format!("{} representations for {} labels", z.rows(), labels.len())));
    }
    if z.cols() != boundaries.dim() {
        return Err(Error::Shape(format!(
            "representation dim {} vs centroid dim {}",
            z.cols(),
            boundaries.dim()
        )));
    }
    if let Some(l) = labels.iter().find(|l| **l >= PersonaType::COUNT) {
        return Err(Error::InvalidArgument(format!("label {l} out of range")));
    }
    Ok(())
}

/// `L_b = (1/N) sum_i |‖z_i − c_{y_i}‖ − δ_{y_i}|`.
pub fn boundary_loss(z: &Tensor, labels: &[usize], boundaries: &BoundaryModel) -> Result<f64> {
    Ok(boundary_loss_grad(z, labels, boundaries)?.loss)
}

/// Boundary loss together with its gradient w.r.t. the representations,
/// the centroids and the raw (pre-softplus) radii.
///
/// A sample exactly on its boundary takes the inside branch.
pub fn boundary_loss_grad(z: &Tensor, labels: &[usize], boundaries: &BoundaryModel) -> Result<BoundaryLoss> {
    check_batch(z, labels, boundaries)?;
    let n = labels.len();
    let d = z.cols();
    let scale = 1.0 / n as f64;
    let raw = boundaries.raw_radii.data();
    let mut loss = 0.0;
    let mut grad_z = vec![0.0; n * d];
    let mut grad_c = vec![0.0; PersonaType::COUNT * d];
    let mut grad_r = vec![0.0; PersonaType::COUNT];
    for (i, &y) in labels.iter().enumerate() {
        let zi = z.row(i);
        let c = boundaries.centroid(y);
        let dist = distance(zi, c);
        let delta = softplus(raw[y]);
        let outside = dist > delta;
        let sign = if outside { 1.0 } else { -1.0 };
        loss += sign * (dist - delta);
        grad_r[y] -= sign * sigmoid(raw[y]) * scale;
        if dist > 0.0 {
            for j in 0..d {
                let gj = sign * (zi[j] - c[j]) / dist * scale;
                grad_z[i * d + j] = gj;
                grad_c[y * d + j] -= gj;
            }
        }
    }
    Ok(BoundaryLoss {
        loss: loss * scale,
        grad_z: Tensor::new(vec![n, d], grad_z)?,
        grad_centroids: Tensor::new(vec![PersonaType::COUNT, d], grad_c)?,
        grad_raw_radii: Tensor::vector(grad_r),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Starting value of every raw radius.
    pub initial_raw_radius: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.05,
            initial_raw_radius: 0.0,
        }
    }
}

/// Per-class mean of `representations`.
pub fn class_centroids(representations: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let k = PersonaType::COUNT;
    let d = representations.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (s, v) in sums[y * d..(y + 1) * d].iter_mut().zip(representations.row(i)) {
            *s += v;
        }
    }
    if let Some(empty) = counts.iter().position(|c| *c == 0) {
        let name = PersonaType::from_index(empty).map_or("?", PersonaType::as_str);
        return Err(Error::Data(format!("class {name} has no samples")));
    }
    for (y, &c) in counts.iter().enumerate() {
        sums[y * d..(y + 1) * d].iter_mut().for_each(|s| *s /= c as f64);
    }
    Tensor::new(vec![k, d], sums)
}

/// Centroids are the per-class means; radii are then fitted by full-batch
/// Adam on the boundary loss with the centroids held fixed.
pub fn fit_boundaries(representations: &Tensor, labels: &[usize], config: &BoundaryConfig) -> Result<BoundaryModel> {
    if representations.ndim() != 2 || representations.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{:?} representations for {} labels",
            representations.shape(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|l| **l >= PersonaType::COUNT) {
        return Err(Error::InvalidArgument(format!("label {l} out of range")));
    }
    let centroids = class_centroids(representations, labels)?;
    let mut model = BoundaryModel::new(
        centroids,
        Tensor::filled(&[PersonaType::COUNT], config.initial_raw_radius),
    )?;
    let mut store = ParamStore::new();
    store.insert(RADII, model.raw_radii.clone());
    let mut opt = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        clip_norm: None,
        ..Default::default()
    });
    for _ in 0..config.epochs {
        let grads = boundary_loss_grad(representations, labels, &model)?;
        opt.step(&mut store, &[(RADII.to_string(), grads.grad_raw_radii)].into_iter().collect());
        model.raw_radii = store.get(RADII).expect("radii").clone();
    }
    Ok(model)
}

/// Nearest centroid, ties to the lowest class index. Radii play no part.
///
/// # Panics
///
/// If `z` does not match the centroid dimension.
pub fn predict_type(z: &[f64], boundaries: &BoundaryModel) -> PersonaType {
    assert_eq!(z.len(), boundaries.dim(), "representation dim vs centroid dim");
    let mut best = (0, f64::INFINITY);
    for k in 0..PersonaType::COUNT {
        let d = distance(z, boundaries.centroid(k));
        if d < best.1 {
            best = (k, d);
        }
    }
    PersonaType::from_index(best.0).expect("class index")
}
