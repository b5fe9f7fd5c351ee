//! Persona value generation with a small encoder-decoder.
//!
//! The context, the target utterance and the whole dialogue are encoded by
//! one shared transformer. The encoded target queries the encoded context;
//! the attended sequence (plus a residual to the target) is stacked with the
//! dialogue encoding to form the memory the decoder cross-attends to.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, PersonaType, TypedInstance};
use crate::error::{Error, Result};
use crate::neural::{
    check_params, write_sidecar, Adam, AdamConfig, Checkpoint, Embedding, EncoderConfig, Graph, Initializer, Linear,
    MultiHeadAttention, ParamStore, Tensor, TransformerEncoder, Var,
};
use crate::text::{tokenize, Vocab, BOS, EOS};
use crate::training::{step_seed, TrainLog, Trained};

const KIND: &str = "valueex";
/// Ids below this are reserved (padding, unknown, start, end, type controls).
const FIRST_WORD: usize = 4 + PersonaType::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeStrategy {
    #[default]
    Greedy,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Maximum number of generated tokens, end token excluded.
    pub max_length: usize,
    pub strategy: DecodeStrategy,
    pub beam_width: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_length: 12,
            strategy: DecodeStrategy::Greedy,
            beam_width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueExConfig {
    pub encoder: EncoderConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub decode: DecodeConfig,
    /// Prepend the persona type as a control token to the target.
    pub type_control_token: bool,
}

impl Default for ValueExConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            epochs: 40,
            learning_rate: 3e-3,
            batch_size: 8,
            decode: DecodeConfig::default(),
            type_control_token: false,
        }
    }
}

impl ValueExConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(1..=4).contains(&self.decode.beam_width) {
            return Err(Error::Config(format!(
                "beam_width {} outside 1..=4",
                self.decode.beam_width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layers {
    embed: Embedding,
    encoder: TransformerEncoder,
    context_target: MultiHeadAttention,
    decoder: TransformerEncoder,
    output: Linear,
}

impl Layers {
    fn new(c: &EncoderConfig) -> Self {
        let d = c.embed_dim;
        let len = c.max_sequence_length;
        Self {
            embed: Embedding::new("embed", c.vocab_size, d),
            encoder: TransformerEncoder::new("encoder", d, c.hidden_dim, c.num_heads, c.num_layers, len),
            context_target: MultiHeadAttention::new("context_target", d, c.num_heads),
            // one slot for the start token
            decoder: TransformerEncoder::decoder("decoder", d, c.hidden_dim, c.num_heads, c.num_layers, len + 1),
            output: Linear::new("output", d, c.vocab_size),
        }
    }

    fn init(&self, store: &mut ParamStore, seed: u64) {
        let mut init = Initializer::new(seed);
        self.embed.init(store, &mut init);
        self.encoder.init(store, &mut init);
        self.context_target.init(store, &mut init);
        self.decoder.init(store, &mut init);
        self.output.init(store, &mut init);
    }
}

#[derive(Debug, Clone)]
pub struct ValueExModel {
    config: ValueExConfig,
    vocab: Vocab,
    params: ParamStore,
    layers: Layers,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ValueExConfig,
    vocab: Vocab,
}

impl ValueExModel {
    pub fn new(vocab: Vocab, mut config: ValueExConfig) -> Result<Self> {
        config.encoder.vocab_size = vocab.len();
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

    pub fn config(&self) -> &ValueExConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut ValueExConfig {
        &mut self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn max_len(&self) -> usize {
        self.config.encoder.max_sequence_length
    }

    fn ids(&self, texts: &[&str]) -> Vec<usize> {
        texts
            .iter()
            .flat_map(|t| tokenize(t))
            .map(|t| self.vocab.id(&t))
            .collect()
    }

    fn encode_ids(&self, g: &mut Graph, ids: &[usize]) -> Var {
        let x = self.layers.embed.forward(g, &self.params, ids);
        let x = g.dropout(x);
        self.layers.encoder.forward(g, &self.params, x, None, true)
    }

    /// Fused memory `[Lt + Ld, d]`.
    fn memory(
        &self,
        g: &mut Graph,
        instance: &TypedInstance,
        dialogue: &Dialogue,
        persona_type: Option<PersonaType>,
    ) -> Result<Var> {
        if instance.dialogue_id != dialogue.id {
            return Err(Error::InvalidArgument(format!(
                "instance {} does not belong to dialogue {}",
                instance.id(),
                dialogue.id
            )));
        }
        let max = self.max_len();
        let mut target = self.ids(&[&instance.target.text]);
        if target.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "instance {} has an empty target",
                instance.id()
            )));
        }
        if self.config.type_control_token {
            if let Some(t) = persona_type {
                target.insert(0, self.vocab.type_id(t));
            }
        }
        target.truncate(max);
        let target_enc = self.encode_ids(g, &target);

        let texts: Vec<&str> = instance.context.iter().map(|u| u.text.as_str()).collect();
        let mut context = self.ids(&texts);
        if context.len() > max {
            context.drain(..context.len() - max);
        }
        // no context: the target attends over itself
        let context_enc = if context.is_empty() {
            target_enc
        } else {
            self.encode_ids(g, &context)
        };
        let attended = self.layers.context_target.forward(g, &self.params, target_enc, context_enc, None);
        let attended = g.add(attended, target_enc);

        let texts: Vec<&str> = dialogue.utterances.iter().map(|u| u.text.as_str()).collect();
        let mut whole = self.ids(&texts);
        whole.truncate(max);
        let dialogue_enc = self.encode_ids(g, &whole);
        Ok(g.concat_rows(&[attended, dialogue_enc]))
    }

    /// Logits `[L, V]` for decoder input `prefix`.
    fn decode_logits(&self, g: &mut Graph, prefix: &[usize], memory: Var) -> Var {
        let x = self.layers.embed.forward(g, &self.params, prefix);
        let x = g.dropout(x);
        let h = self.layers.decoder.decode(g, &self.params, x, memory);
        self.layers.output.forward(g, &self.params, h)
    }

    /// Generate a value for `instance`, optionally conditioned on a type.
    pub fn generate(
        &self,
        instance: &TypedInstance,
        dialogue: &Dialogue,
        persona_type: Option<PersonaType>,
    ) -> Result<String> {
        let limit = self.config.decode.max_length.min(self.max_len());
        if limit == 0 {
            return Ok(String::new());
        }
        let mut g = Graph::new();
        let memory = self.memory(&mut g, instance, dialogue, persona_type)?;
        let ids = match self.config.decode.strategy {
            DecodeStrategy::Greedy => self.greedy(&mut g, memory, limit),
            DecodeStrategy::Beam => self.beam(&mut g, memory, limit, self.config.decode.beam_width),
        };
        Ok(self.vocab.decode(&ids))
    }

    /// Log-probabilities of the next token, restricted to word tokens and
    /// the end token.
    fn next_log_probs(&self, g: &mut Graph, prefix: &[usize], memory: Var) -> Vec<(usize, f64)> {
        let logits = self.decode_logits(g, prefix, memory);
        let row = g.value(logits).row(prefix.len() - 1).to_vec();
        let allowed: Vec<usize> = std::iter::once(EOS).chain(FIRST_WORD..row.len()).collect();
        let max = allowed.iter().map(|&i| row[i]).fold(f64::NEG_INFINITY, f64::max);
        let norm = max + allowed.iter().map(|&i| (row[i] - max).exp()).sum::<f64>().ln();
        allowed.into_iter().map(|i| (i, row[i] - norm)).collect()
    }

    fn greedy(&self, g: &mut Graph, memory: Var, limit: usize) -> Vec<usize> {
        let mut prefix = vec![BOS];
        while prefix.len() <= limit {
            let mut best = (EOS, f64::NEG_INFINITY);
            for (id, lp) in self.next_log_probs(g, &prefix, memory) {
                if lp > best.1 {
                    best = (id, lp);
                }
            }
            if best.0 == EOS {
                break;
            }
            prefix.push(best.0);
        }
        prefix.split_off(1)
    }

    fn beam(&self, g: &mut Graph, memory: Var, limit: usize, width: usize) -> Vec<usize> {
        let mut live: Vec<(Vec<usize>, f64)> = vec![(vec![BOS], 0.0)];
        let mut done: Vec<(Vec<usize>, f64)> = Vec::new();
        while !live.is_empty() {
            let mut candidates: Vec<(Vec<usize>, f64)> = Vec::new();
            for (prefix, score) in &live {
                for (id, lp) in self.next_log_probs(g, prefix, memory) {
                    let mut next = prefix.clone();
                    next.push(id);
                    candidates.push((next, score + lp));
                }
            }
            // stable sort keeps lower token ids first among equal scores
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
            candidates.truncate(width);
            live.clear();
            for (seq, score) in candidates {
                if *seq.last().expect("non-empty") == EOS || seq.len() > limit {
                    done.push((seq, score));
                } else {
                    live.push((seq, score));
                }
            }
            if done.len() >= width {
                break;
            }
        }
        let best = done
            .into_iter()
            .fold(None::<(Vec<usize>, f64)>, |acc, c| match acc {
                Some(a) if a.1 >= c.1 => Some(a),
                _ => Some(c),
            })
            .map(|(seq, _)| seq)
            .unwrap_or_default();
        best.into_iter().skip(1).filter(|&i| i != EOS).collect()
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

/// The fused memory sequence for `instance`, `[Lt + Ld, d]`.
pub fn valueex_encode(model: &ValueExModel, instance: &TypedInstance, dialogue: &Dialogue) -> Result<Tensor> {
    let mut g = Graph::new();
    let m = model.memory(&mut g, instance, dialogue, instance.gold_type)?;
    Ok(g.value(m).clone())
}

/// Generate the value of `instance`, conditioning on its `gold_type` when
/// type control tokens are enabled.
pub fn generate_value(model: &ValueExModel, instance: &TypedInstance, dialogue: &Dialogue) -> Result<String> {
    model.generate(instance, dialogue, instance.gold_type)
}

/// Every gold-valued instance of `dialogues`, paired with its dialogue.
pub fn value_examples(dialogues: &[Dialogue]) -> Vec<(TypedInstance, &Dialogue)> {
    dialogues
        .iter()
        .flat_map(|d| {
            d.gold_instances()
                .into_iter()
                .filter(|i| i.gold_value.is_some())
                .map(move |i| (i, d))
        })
        .collect()
}

/// Token-level cross-entropy with teacher forcing, `[BOS, y] -> [y, EOS]`.
pub fn train_valueex(examples: &[(TypedInstance, &Dialogue)], config: &ValueExConfig) -> Result<Trained<ValueExModel>> {
    if examples.is_empty() {
        return Err(Error::Data("no value-annotated training instances".into()));
    }
    for (inst, _) in examples {
        match &inst.gold_value {
            Some(v) if !tokenize(v).is_empty() => {}
            _ => return Err(Error::Data(format!("instance {} has no gold value", inst.id()))),
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut texts: Vec<&str> = Vec::new();
    for (inst, d) in examples {
        if seen.insert(d.id.as_str()) {
            texts.extend(d.utterances.iter().map(|u| u.text.as_str()));
        }
        texts.push(inst.gold_value.as_deref().expect("checked"));
    }
    let mut model = ValueExModel::new(Vocab::build(texts), config.clone())?;
    let mut log = TrainLog::default();
    let mut opt = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..Default::default()
    });
    let seed = config.encoder.seed;
    let max = model.max_len();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + epoch as u64)));
        let mut total = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let mut g = Graph::with_dropout(config.encoder.dropout_rate, step_seed(seed, epoch, step));
            let mut logits = Vec::new();
            let mut targets = Vec::new();
            for &i in batch {
                let (inst, d) = &examples[i];
                let memory = model.memory(&mut g, inst, d, inst.gold_type)?;
                let mut y = model.vocab.encode(inst.gold_value.as_deref().expect("checked"), max);
                let mut input = vec![BOS];
                input.extend_from_slice(&y);
                y.push(EOS);
                logits.push(model.decode_logits(&mut g, &input, memory));
                targets.extend(y);
            }
            let all = g.concat_rows(&logits);
            let loss = g.cross_entropy(all, &targets);
            total += g.value(loss).data()[0] * batch.len() as f64;
            let grads = g.backward(loss);
            opt.step(&mut model.params, &g.param_grads(&grads));
        }
        log.epoch(epoch, total / examples.len() as f64);
    }
    Ok(Trained { model, log })
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValuePrediction {
    pub instance: String,
    #[serde(rename = "type")]
    pub persona_type: PersonaType,
    pub value: String,
}

pub fn write_predictions(path: &Path, predictions: &[ValuePrediction]) -> Result<()> {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p).map_err(|e| Error::Data(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<ValuePrediction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
