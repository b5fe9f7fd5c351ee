//! Persona type identification with speaker-aware representations and
//! adaptive decision boundaries.
//!
//! Every utterance of an instance is summarised by a BiGRU. The summaries
//! run through a dialogue transformer; the target speaker's rows then run
//! through a speaker transformer (one parameter set shared by all speakers).
//! Speaker-aware and context-aware attention vectors are fused by a third
//! attention, joined with a whole-instance context vector and projected to
//! the representation `z`. Training first fits `z` with a cross-entropy
//! head, then fits class boundaries on the frozen representations.

mod boundary;
mod context;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use boundary::{
    boundary_loss, boundary_loss_grad, class_centroids, fit_boundaries, predict_type, BoundaryConfig, BoundaryLoss,
    BoundaryModel,
};
pub use context::{load_context_vectors, ContextConfig, ContextEncoder, ContextMode};

use crate::corpus::{PersonaType, TypedInstance};
use crate::error::{Error, Result};
use crate::neural::{
    check_params, write_sidecar, Adam, AdamConfig, AdditiveAttention, BiGru, Checkpoint, Embedding, EncoderConfig, Graph, Initializer, Linear,
    ParamStore, Tensor, TransformerEncoder, Var,
};
use crate::text::{Vocab, UNK};
use crate::training::{step_seed, TrainLog, Trained};

const KIND: &str = "typeid";
const CENTROIDS: &str = "boundary.centroids";
const RADII: &str = "boundary.raw_radii";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TypeIdConfig {
    pub encoder: EncoderConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Hidden width of the additive attention scorers.
    pub attention_dim: usize,
    pub context: ContextConfig,
    pub boundary: BoundaryConfig,
    /// Drop the speaker encoder; the fusion attends over the context-aware
    /// vector alone.
    pub disable_speaker_module: bool,
    /// Leave the whole-instance context vector out of the fusion.
    pub disable_pretrained_context: bool,
}

impl Default for TypeIdConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            epochs: 30,
            learning_rate: 3e-3,
            batch_size: 8,
            attention_dim: 16,
            context: ContextConfig::default(),
            boundary: BoundaryConfig::default(),
            disable_speaker_module: false,
            disable_pretrained_context: false,
        }
    }
}

/// Utterance positions of `instance` (context then target) grouped by speaker,
/// in order of position.
pub fn speaker_partition(instance: &TypedInstance) -> BTreeMap<String, Vec<usize>> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, u) in instance.utterances().enumerate() {
        out.entry(u.speaker_id.clone()).or_default().push(i);
    }
    out
}

#[derive(Debug, Clone)]
struct Layers {
    embed: Embedding,
    gru: BiGru,
    summary: Linear,
    dialogue: TransformerEncoder,
    speaker: TransformerEncoder,
    sar: AdditiveAttention,
    car: AdditiveAttention,
    gar: AdditiveAttention,
    fusion: Linear,
    head: Linear,
}

impl Layers {
    fn new(config: &TypeIdConfig, context_dim: usize) -> Self {
        let c = &config.encoder;
        let d = c.embed_dim;
        let a = config.attention_dim;
        let fused = if config.disable_pretrained_context { d } else { d + context_dim };
        Self {
            embed: Embedding::new("embed", c.vocab_size, d),
            gru: BiGru::new("utterance.gru", d, c.hidden_dim),
            summary: Linear::new("utterance.proj", 2 * c.hidden_dim, d),
            dialogue: TransformerEncoder::new("dialogue", d, c.hidden_dim, c.num_heads, c.num_layers, c.max_sequence_length),
            speaker: TransformerEncoder::new("speaker", d, c.hidden_dim, c.num_heads, c.num_layers, c.max_sequence_length),
            sar: AdditiveAttention::new("attn.sar", d, d, a),
            car: AdditiveAttention::new("attn.car", d, d, a),
            gar: AdditiveAttention::new("attn.gar", d, d, a),
            fusion: Linear::new("fusion", fused, d),
            head: Linear::new("head", d, PersonaType::COUNT),
        }
    }

    fn init(&self, store: &mut ParamStore, context: &ContextEncoder, config: &TypeIdConfig) {
        let mut init = Initializer::new(config.encoder.seed);
        self.embed.init(store, &mut init);
        self.gru.init(store, &mut init);
        self.summary.init(store, &mut init);
        self.dialogue.init(store, &mut init);
        if !config.disable_speaker_module {
            self.speaker.init(store, &mut init);
            self.sar.init(store, &mut init);
        }
        self.car.init(store, &mut init);
        self.gar.init(store, &mut init);
        if !config.disable_pretrained_context {
            context.init(store, &mut init);
        }
        self.fusion.init(store, &mut init);
        self.head.init(store, &mut init);
    }
}

#[derive(Debug, Clone)]
pub struct TypeIdModel {
    config: TypeIdConfig,
    vocab: Vocab,
    params: ParamStore,
    layers: Layers,
    context: ContextEncoder,
    boundaries: Option<BoundaryModel>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: TypeIdConfig,
    vocab: Vocab,
}

impl TypeIdModel {
    /// Untrained model with seeded parameters and no boundaries.
    pub fn new(vocab: Vocab, mut config: TypeIdConfig) -> Result<Self> {
        config.encoder.vocab_size = vocab.len();
        config.encoder.validate()?;
        if config.attention_dim == 0 || config.batch_size == 0 {
            return Err(Error::Config("attention_dim and batch_size must be positive".into()));
        }
        let context = ContextEncoder::from_config(&config.context, &config.encoder)?;
        let layers = Layers::new(&config, context.dim());
        let mut params = ParamStore::new();
        layers.init(&mut params, &context, &config);
        Ok(Self {
            config,
            vocab,
            params,
            layers,
            context,
            boundaries: None,
        })
    }

    pub fn config(&self) -> &TypeIdConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn context_encoder(&self) -> &ContextEncoder {
        &self.context
    }

    pub fn boundaries(&self) -> Option<&BoundaryModel> {
        self.boundaries.as_ref()
    }

    /// Width of the representation `z`.
    pub fn dim(&self) -> usize {
        self.config.encoder.embed_dim
    }

    pub fn set_boundaries(&mut self, boundaries: BoundaryModel) -> Result<()> {
        if boundaries.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "centroid dim {} vs representation dim {}",
                boundaries.dim(),
                self.dim()
            )));
        }
        self.boundaries = Some(boundaries);
        Ok(())
    }

    fn token_ids(&self, text: &str) -> Vec<usize> {
        let ids = self.vocab.encode(text, self.config.encoder.max_sequence_length);
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    fn represent(&self, g: &mut Graph, context: &ContextEncoder, instance: &TypedInstance) -> Result<Var> {
        if !instance.is_well_formed() {
            return Err(Error::InvalidArgument(format!(
                "instance {} is not well formed",
                instance.id()
            )));
        }
        let l = &self.layers;
        let p = &self.params;
        let summaries: Vec<Var> = instance
            .utterances()
            .map(|u| {
                let x = l.embed.forward(g, p, &self.token_ids(&u.text));
                let x = g.dropout(x);
                let s = l.gru.forward(g, p, x).summary;
                l.summary.forward(g, p, s)
            })
            .collect();
        let seq = g.concat_rows(&summaries);
        let dialogue = l.dialogue.forward(g, p, seq, None, true);
        let target = instance.len() - 1;
        let query = g.row(dialogue, target);

        let (car, _) = l.car.forward(g, p, query, dialogue, dialogue, None);
        let keys = if self.config.disable_speaker_module {
            car
        } else {
            let own = &speaker_partition(instance)[&instance.target.speaker_id];
            let rows = g.gather_rows(dialogue, own);
            let speaker = l.speaker.forward(g, p, rows, None, true);
            let (sar, _) = l.sar.forward(g, p, query, speaker, speaker, None);
            g.concat_rows(&[sar, car])
        };
        let keys = if g.value(keys).ndim() == 1 {
            let d = self.dim();
            g.reshape(keys, vec![1, d])
        } else {
            keys
        };
        let (gar, _) = l.gar.forward(g, p, query, keys, keys, None);
        let fused = if self.config.disable_pretrained_context {
            gar
        } else {
            let ctx = context.encode(g, p, &self.vocab, instance)?;
            g.concat_cols(&[gar, ctx])
        };
        Ok(l.fusion.forward(g, p, fused))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_value(Metadata {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut params = self.params.clone();
        if let Some(b) = &self.boundaries {
            params.insert(CENTROIDS, b.centroids().clone());
            params.insert(RADII, b.raw_radii().clone());
        }
        Checkpoint::new(KIND, meta, params).save(path)?;
        write_sidecar(path, &self.config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path, KIND)?;
        let meta: Metadata = ckpt.metadata_as()?;
        let mut model = Self::new(meta.vocab, meta.config)?;
        let mut params = ckpt.params;
        let boundary = (params.remove(CENTROIDS), params.remove(RADII));
        check_params(&model.params, &params)?;
        model.params = params;
        match boundary {
            (Some(c), Some(r)) => model.set_boundaries(BoundaryModel::new(c, r)?)?,
            (None, None) => {}
            _ => return Err(Error::Checkpoint("incomplete boundary parameters".into())),
        }
        Ok(model)
    }
}

/// The fused representation `z` (`[d]`) of `instance`.
pub fn typeid_representation(model: &TypeIdModel, context: &ContextEncoder, instance: &TypedInstance) -> Result<Tensor> {
    let mut g = Graph::new();
    let z = model.represent(&mut g, context, instance)?;
    Ok(g.value(z).clone())
}

/// Representations of many instances, stacked as `[N, d]`.
pub fn typeid_representations(model: &TypeIdModel, instances: &[TypedInstance]) -> Result<Tensor> {
    let rows = instances
        .iter()
        .map(|i| typeid_representation(model, &model.context, i).map(Tensor::into_data))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

/// Nearest-centroid type of `instance`; the model must have boundaries.
pub fn classify(model: &TypeIdModel, instance: &TypedInstance) -> Result<PersonaType> {
    let b = model
        .boundaries()
        .ok_or_else(|| Error::Missing("type model has no fitted boundaries".into()))?;
    let z = typeid_representation(model, &model.context, instance)?;
    Ok(predict_type(z.data(), b))
}

fn gold_labels(instances: &[TypedInstance]) -> Result<Vec<usize>> {
    instances
        .iter()
        .map(|i| {
            i.gold_type
                .map(PersonaType::index)
                .ok_or_else(|| Error::Data(format!("instance {} has no gold type", i.id())))
        })
        .collect()
}

/// Two-phase training: a cross-entropy head over the five types shapes the
/// representation, then the head is dropped and boundaries are fitted on
/// the frozen training representations.
pub fn train_typeid(instances: &[TypedInstance], config: &TypeIdConfig) -> Result<Trained<TypeIdModel>> {
    let labels = gold_labels(instances)?;
    let mut seen = [false; PersonaType::COUNT];
    labels.iter().for_each(|l| seen[*l] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Data(format!(
            "no training instance of type {}",
            PersonaType::ALL[missing]
        )));
    }
    let mut texts: Vec<&str> = Vec::new();
    let mut covered = std::collections::BTreeSet::new();
    for inst in instances {
        // context utterances repeat across instances of one dialogue
        for u in inst.utterances() {
            if covered.insert((inst.dialogue_id.as_str(), u.index)) {
                texts.push(&u.text);
            }
        }
    }
    let vocab = Vocab::build(texts);
    let mut model = TypeIdModel::new(vocab, config.clone())?;
    let mut log = TrainLog::default();
    let mut opt = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..Default::default()
    });
    let seed = config.encoder.seed;
    let mut order: Vec<usize> = (0..instances.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + epoch as u64)));
        let mut total = 0.0;
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for (step, batch) in batches.iter().enumerate() {
            let mut g = Graph::with_dropout(config.encoder.dropout_rate, step_seed(seed, epoch, step));
            let zs = batch
                .iter()
                .map(|&i| model.represent(&mut g, &model.context, &instances[i]))
                .collect::<Result<Vec<_>>>()?;
            let z = g.concat_rows(&zs);
            let logits = model.layers.head.forward(&mut g, &model.params, z);
            let targets: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let loss = g.cross_entropy(logits, &targets);
            total += g.value(loss).data()[0] * batch.len() as f64;
            let grads = g.backward(loss);
            opt.step(&mut model.params, &g.param_grads(&grads));
        }
        log.epoch(epoch, total / instances.len() as f64);
    }
    let reps = typeid_representations(&model, instances)?;
    let boundaries = fit_boundaries(&reps, &labels, &config.boundary)?;
    model.set_boundaries(boundaries)?;
    Ok(Trained { model, log })
}
