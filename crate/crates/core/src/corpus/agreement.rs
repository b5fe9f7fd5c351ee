//! Krippendorff's alpha for nominal labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of an annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item: String,
    pub annotator: String,
    pub label: String,
}

/// Labels from several annotators aligned to a shared item list. A `None`
/// entry means the annotator did not label that item.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    item_ids: Vec<String>,
    labels: BTreeMap<String, Vec<Option<String>>>,
}

impl AnnotationSet {
    pub fn new(item_ids: Vec<String>, labels: BTreeMap<String, Vec<Option<String>>>) -> Result<Self> {
        for (annotator, l) in &labels {
            if l.len() != item_ids.len() {
                return Err(Error::InvalidArgument(format!(
                    "annotator {annotator} has {} labels for {} items",
                    l.len(),
                    item_ids.len()
                )));
            }
        }
        Ok(Self { item_ids, labels })
    }

    /// Group records by item (first-seen order) and annotator. A repeated
    /// (item, annotator) pair keeps the last label.
    pub fn from_records(records: &[AnnotationRecord]) -> Self {
        let mut item_ids: Vec<String> = Vec::new();
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for r in records {
            if !index.contains_key(r.item.as_str()) {
                index.insert(&r.item, item_ids.len());
                item_ids.push(r.item.clone());
            }
        }
        let mut labels: BTreeMap<String, Vec<Option<String>>> = BTreeMap::new();
        for r in records {
            let row = labels
                .entry(r.annotator.clone())
                .or_insert_with(|| vec![None; item_ids.len()]);
            row[index[r.item.as_str()]] = Some(r.label.clone());
        }
        Self { item_ids, labels }
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn annotators(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    pub fn labels(&self, annotator: &str) -> Option<&[Option<String>]> {
        self.labels.get(annotator).map(Vec::as_slice)
    }

    /// Labels given to item `i`, across annotators.
    fn item_values(&self, i: usize) -> Vec<&str> {
        self.labels.values().filter_map(|l| l[i].as_deref()).collect()
    }
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(AnnotationSet::from_records(&records))
}

/// Krippendorff's alpha with the nominal difference function,
/// `1 - D_o / D_e`, computed from the coincidence matrix.
///
/// Items with fewer than two labels are not pairable and are skipped. When
/// every pairable value falls in one category, `D_e` is zero and alpha is
/// reported as 1.0.
pub fn krippendorff_alpha(annotations: &AnnotationSet) -> Result<f64> {
    if annotations.labels.len() < 2 {
        return Err(Error::Data("alpha needs at least two annotators".into()));
    }
    let mut categories: BTreeMap<&str, usize> = BTreeMap::new();
    for l in annotations.labels.values() {
        for v in l.iter().flatten() {
            let next = categories.len();
            categories.entry(v.as_str()).or_insert(next);
        }
    }
    let k = categories.len();
    let mut coincidence = vec![0.0; k * k];
    let mut pairable = false;
    for i in 0..annotations.item_ids.len() {
        let values = annotations.item_values(i);
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable = true;
        let weight = 1.0 / (m - 1) as f64;
        for (a, va) in values.iter().enumerate() {
            for (b, vb) in values.iter().enumerate() {
                if a != b {
                    coincidence[categories[va] * k + categories[vb]] += weight;
                }
            }
        }
    }
    if !pairable {
        return Err(Error::Data("no item has two or more labels".into()));
    }
    let marginals: Vec<f64> = (0..k).map(|c| coincidence[c * k..(c + 1) * k].iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c * k + d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - 1.0));
    if d_e == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - d_o / d_e)
}
