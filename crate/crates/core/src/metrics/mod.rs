//! Classification and generation metrics.
//!
//! All scores are stored in `[0, 1]`; reports multiply ROUGE and BLEU by 100
//! only when rendering.

mod classification;
mod generation;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use classification::{
    confusion, per_class_scores, prf1, weighted_f1, weighted_from_scores, ClassScore, ConfusionMatrix, Prf,
};
pub use generation::{bleu, rouge_n, GenerationScores, BLEU_SMOOTHING};

use crate::corpus::PersonaType;

/// Type-identification scores: per-class P/R/F1 and their weighted F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScores {
    pub per_class: BTreeMap<PersonaType, ClassScore>,
    pub weighted_f1: f64,
}

impl TypeScores {
    pub fn compute(preds: &[Option<PersonaType>], golds: &[PersonaType]) -> crate::Result<Self> {
        let mut per_class = per_class_scores(preds, golds)?;
        for t in PersonaType::ALL {
            per_class.entry(t).or_default();
        }
        Ok(Self {
            weighted_f1: weighted_from_scores(&per_class),
            per_class,
        })
    }
}

/// All metrics of one evaluation run; stages that were not run are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub discovery: Option<Prf>,
    pub typing: Option<TypeScores>,
    pub generation: Option<GenerationScores>,
}
