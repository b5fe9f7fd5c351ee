//! Persona discovery: a per-utterance binary classifier.
//!
//! Each utterance is encoded by a word-level transformer and mean-pooled; the
//! pooled sequence runs through a dialogue-level transformer, and a two-layer
//! head scores every contextual vector. During training the minority class is
//! oversampled with SMOTE in the head's input space.

mod smote;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use smote::{interpolate, smote_upsample, FeaturePoint, SmoteOutput, SyntheticOrigin};

use crate::corpus::{Corpus, Dialogue, Split};
use crate::error::{Error, Result};
use crate::neural::{
    check_params, write_sidecar, Adam, AdamConfig, Checkpoint, Embedding, EncoderConfig, Graph, Initializer, Linear, ParamStore, Tensor,
    TransformerEncoder, Var,
};
use crate::text::{Vocab, UNK};
use crate::training::{step_seed, TrainLog, Trained, UpsampleAudit};

const KIND: &str = "discovery";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub encoder: EncoderConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub decision_threshold: f64,
    pub smote: bool,
    pub smote_k: usize,
    pub smote_ratio: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            epochs: 30,
            learning_rate: 3e-3,
            decision_threshold: 0.5,
            smote: true,
            smote_k: 5,
            smote_ratio: 1.0,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decision_threshold >= 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::Config(format!(
                "decision_threshold {} outside [0, 1)",
                self.decision_threshold
            )));
        }
        if self.smote_k == 0 || self.smote_ratio <= 0.0 {
            return Err(Error::Config("smote_k and smote_ratio must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layers {
    embed: Embedding,
    utterance: TransformerEncoder,
    dialogue: TransformerEncoder,
    fc1: Linear,
    fc2: Linear,
}

impl Layers {
    fn new(c: &EncoderConfig) -> Self {
        let d = c.embed_dim;
        Self {
            embed: Embedding::new("embed", c.vocab_size, d),
            utterance: TransformerEncoder::new("utterance", d, c.hidden_dim, c.num_heads, c.num_layers, c.max_sequence_length),
            dialogue: TransformerEncoder::new("dialogue", d, c.hidden_dim, c.num_heads, c.num_layers, c.max_sequence_length),
            fc1: Linear::new("head.fc1", d, c.hidden_dim),
            fc2: Linear::new("head.fc2", c.hidden_dim, 2),
        }
    }

    fn init(&self, store: &mut ParamStore, seed: u64) {
        let mut init = Initializer::new(seed);
        self.embed.init(store, &mut init);
        self.utterance.init(store, &mut init);
        self.dialogue.init(store, &mut init);
        self.fc1.init(store, &mut init);
        self.fc2.init(store, &mut init);
    }
}

#[derive(Debug, Clone)]
pub struct DiscoveryModel {
    config: DiscoveryConfig,
    vocab: Vocab,
    params: ParamStore,
    layers: Layers,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: DiscoveryConfig,
    vocab: Vocab,
}

/// Per-utterance output of [`predict_discovery`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryPrediction {
    pub positive: Vec<bool>,
    pub probabilities: Vec<f64>,
}

impl DiscoveryModel {
    /// Untrained model with seeded parameters.
    pub fn new(vocab: Vocab, mut config: DiscoveryConfig) -> Result<Self> {
        config.encoder.vocab_size = vocab.len();
        config.encoder.validate()?;
        config.validate()?;
        let layers = Layers::new(&config.encoder);
        let mut params = ParamStore::new();
        layers.init(&mut params, config.encoder.seed);
        Ok(Self {
            config,
            vocab,
            params,
            layers,
        })
    }

    pub fn config(&self) -> &DiscoveryConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn decision_threshold(&self) -> f64 {
        self.config.decision_threshold
    }

    pub fn set_decision_threshold(&mut self, t: f64) {
        self.config.decision_threshold = t;
    }

    fn token_ids(&self, text: &str) -> Vec<usize> {
        let ids = self.vocab.encode(text, self.config.encoder.max_sequence_length);
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    /// Contextual utterance vectors `[n, d]` (the head's input).
    fn features(&self, g: &mut Graph, dialogue: &Dialogue) -> Var {
        let pooled: Vec<Var> = dialogue
            .utterances
            .iter()
            .map(|u| {
                let ids = self.token_ids(&u.text);
                let x = self.layers.embed.forward(g, &self.params, &ids);
                let x = g.dropout(x);
                let h = self.layers.utterance.forward(g, &self.params, x, None, true);
                g.mean_rows(h, None)
            })
            .collect();
        let seq = g.concat_rows(&pooled);
        self.layers.dialogue.forward(g, &self.params, seq, None, true)
    }

    fn head(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.layers.fc1.forward(g, &self.params, x);
        let h = g.relu(h);
        let h = g.dropout(h);
        self.layers.fc2.forward(g, &self.params, h)
    }

    fn feature_rows(&self, dialogue: &Dialogue) -> Vec<Vec<f64>> {
        let mut g = Graph::new();
        let f = self.features(&mut g, dialogue);
        let t = g.value(f);
        (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_value(Metadata {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Checkpoint::new(KIND, meta, self.params.clone()).save(path)?;
        write_sidecar(path, &self.config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path, KIND)?;
        let meta: Metadata = ckpt.metadata_as()?;
        let mut model = Self::new(meta.vocab, meta.config)?;
        check_params(&model.params, &ckpt.params)?;
        model.params = ckpt.params;
        Ok(model)
    }
}

/// Persona probability of every utterance in `dialogue`.
pub fn discovery_forward(model: &DiscoveryModel, dialogue: &Dialogue) -> Result<Vec<f64>> {
    if dialogue.is_empty() {
        return Err(Error::InvalidArgument(format!("dialogue {} is empty", dialogue.id)));
    }
    let mut g = Graph::new();
    let f = model.features(&mut g, dialogue);
    let logits = model.head(&mut g, f);
    let probs = g.softmax(logits, None);
    let p = g.value(probs);
    Ok((0..p.rows()).map(|i| p.get(i, 1)).collect())
}

/// Threshold the persona probabilities: positive iff `p >= threshold`.
pub fn predict_discovery(model: &DiscoveryModel, dialogue: &Dialogue) -> Result<DiscoveryPrediction> {
    let probabilities = discovery_forward(model, dialogue)?;
    Ok(DiscoveryPrediction {
        positive: apply_threshold(&probabilities, model.decision_threshold()),
        probabilities,
    })
}

pub fn apply_threshold(probabilities: &[f64], threshold: f64) -> Vec<bool> {
    probabilities.iter().map(|p| *p >= threshold).collect()
}

/// Train on the corpus' train split with per-dialogue Adam steps.
///
/// Synthetic minority points from SMOTE are fed straight to the head,
/// spread round-robin over the steps of the epoch. When the train split has
/// fewer than two positives, upsampling is skipped with a warning.
pub fn train_discovery(corpus: &Corpus, config: &DiscoveryConfig) -> Result<Trained<DiscoveryModel>> {
    let train = corpus.split(Split::Train);
    if train.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    if let Some(d) = train.iter().find(|d| d.is_empty()) {
        return Err(Error::Data(format!("dialogue {} is empty", d.id)));
    }
    let vocab = Vocab::build(train.iter().flat_map(|d| d.utterances.iter().map(|u| u.text.as_str())));
    let mut model = DiscoveryModel::new(vocab, config.clone())?;
    let mut log = TrainLog::default();
    let positives = train.iter().flat_map(|d| &d.utterances).filter(|u| u.has_persona).count();
    let total = train.iter().map(Dialogue::len).sum::<usize>();
    let minority = positives.min(total - positives);
    let mut upsample = config.smote;
    if upsample && minority < 2 {
        log.warn(format!(
            "train split has {minority} minority-class utterance(s); training without SMOTE"
        ));
        upsample = false;
    }
    let k = config.smote_k.min(minority.saturating_sub(1)).max(1);
    let seed = config.encoder.seed;
    let mut opt = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..Default::default()
    });
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let synthetic: Vec<Vec<f64>> = if upsample {
            let points: Vec<FeaturePoint> = train
                .iter()
                .flat_map(|d| {
                    model
                        .feature_rows(d)
                        .into_iter()
                        .zip(&d.utterances)
                        .map(|(v, u)| FeaturePoint::new(v, u8::from(u.has_persona)))
                        .collect::<Vec<_>>()
                })
                .collect();
            let out = smote_upsample(&points, k, config.smote_ratio, seed.wrapping_add(epoch as u64))?;
            log.upsampling.push(UpsampleAudit {
                epoch,
                split: Split::Train,
                minority,
                synthetic: out.origins.len(),
            });
            out.points[out.original_count..]
                .iter()
                .map(|p| p.vector.clone())
                .collect()
        } else {
            Vec::new()
        };
        let synthetic_label = usize::from(positives <= total - positives);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + epoch as u64)));
        let mut epoch_loss = 0.0;
        for (step, &di) in order.iter().enumerate() {
            let d = &train[di];
            let mut g = Graph::with_dropout(config.encoder.dropout_rate, step_seed(seed, epoch, step));
            let feats = model.features(&mut g, d);
            let mut logits = model.head(&mut g, feats);
            let mut targets: Vec<usize> = d.utterances.iter().map(|u| usize::from(u.has_persona)).collect();
            let extra: Vec<&Vec<f64>> = synthetic.iter().skip(step).step_by(order.len()).collect();
            if !extra.is_empty() {
                let rows: Vec<Vec<f64>> = extra.into_iter().cloned().collect();
                let x = g.constant(Tensor::from_rows(&rows)?);
                let syn_logits = model.head(&mut g, x);
                logits = g.concat_rows(&[logits, syn_logits]);
                targets.extend(std::iter::repeat_n(synthetic_label, rows.len()));
            }
            let loss = g.cross_entropy(logits, &targets);
            epoch_loss += g.value(loss).data()[0];
            let grads = g.backward(loss);
            opt.step(&mut model.params, &g.param_grads(&grads));
        }
        log.epoch(epoch, epoch_loss / order.len() as f64);
    }
    Ok(Trained { model, log })
}
