//! Overfit probes on the synthetic corpora.

use std::time::{Duration, Instant};

use spc_core::corpus::Split;
use spc_core::discovery::{predict_discovery, train_discovery, DiscoveryConfig};
use spc_core::metrics::prf1;
use spc_core::neural::EncoderConfig;
use spc_core::text::tokenize;
use spc_core::typeid::{classify, train_typeid, typeid_representations, TypeIdConfig};
use spc_core::valueex::{generate_value, train_valueex, value_examples, ValueExConfig};

pub fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        embed_dim: 16,
        hidden_dim: 16,
        num_heads: 2,
        max_sequence_length: 16,
        ..Default::default()
    }
}

#[derive(Debug)]
pub struct DiscoveryProbe {
    pub f1: f64,
    pub epochs: usize,
    pub elapsed: Duration,
    pub loss_fell: bool,
}

pub fn discovery_probe() -> DiscoveryProbe {
    let corpus = super::separable_discovery_corpus();
    let start = Instant::now();
    let config = DiscoveryConfig {
        encoder: small_encoder(),
        epochs: 200,
        learning_rate: 5e-3,
        ..Default::default()
    };
    let trained = train_discovery(&corpus, &config).unwrap();
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for d in corpus.split(Split::Train) {
        preds.extend(predict_discovery(&trained.model, d).unwrap().positive);
        golds.extend(d.utterances.iter().map(|u| u.has_persona));
    }
    DiscoveryProbe {
        f1: prf1(&preds, &golds).unwrap().f1,
        epochs: config.epochs,
        elapsed: start.elapsed(),
        loss_fell: trained.log.final_loss() < trained.log.initial_loss(),
    }
}

#[derive(Debug)]
pub struct TypeIdProbe {
    pub correct: usize,
    pub total: usize,
    /// Points inside their own class boundary.
    pub inside: usize,
    /// Per class: (inside, members).
    pub per_class: [(usize, usize); 5],
    pub radii: Vec<f64>,
}

pub fn typeid_probe() -> TypeIdProbe {
    let corpus = super::separable_type_corpus();
    let instances = super::type_instances(&corpus);
    let config = TypeIdConfig {
        encoder: small_encoder(),
        epochs: 40,
        learning_rate: 5e-3,
        attention_dim: 8,
        ..Default::default()
    };
    let trained = train_typeid(&instances, &config).unwrap();
    let correct = instances
        .iter()
        .filter(|i| classify(&trained.model, i).unwrap() == i.gold_type.unwrap())
        .count();
    let b = trained.model.boundaries().unwrap();
    let reps = typeid_representations(&trained.model, &instances).unwrap();
    let mut per_class = [(0, 0); 5];
    for (n, i) in instances.iter().enumerate() {
        let k = i.gold_type.unwrap().index();
        per_class[k].1 += 1;
        if b.contains(reps.row(n), k) {
            per_class[k].0 += 1;
        }
    }
    TypeIdProbe {
        correct,
        total: instances.len(),
        inside: per_class.iter().map(|c| c.0).sum(),
        per_class,
        radii: b.radii(),
    }
}

pub fn valueex_probe() -> (usize, usize) {
    let corpus = super::copy_corpus();
    let examples = value_examples(corpus.split(Split::Train));
    let config = ValueExConfig {
        encoder: small_encoder(),
        epochs: 150,
        learning_rate: 5e-3,
        batch_size: 5,
        ..Default::default()
    };
    let trained = train_valueex(&examples, &config).unwrap();
    let exact = examples
        .iter()
        .filter(|(i, d)| {
            let g = generate_value(&trained.model, i, d).unwrap();
            tokenize(&g) == tokenize(i.gold_value.as_deref().unwrap())
        })
        .count();
    (exact, examples.len())
}
