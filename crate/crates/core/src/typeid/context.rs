//! Whole-instance context vectors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::TypedInstance;
use crate::error::{Error, Result};
use crate::neural::{Embedding, EncoderConfig, Graph, Initializer, ParamStore, Tensor, TransformerEncoder, Var};
use crate::text::{tokenize, Vocab, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    /// A small transformer trained with the rest of the model.
    #[default]
    TrainableSmall,
    /// Precomputed vectors looked up by instance id.
    ExternalFrozen,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextConfig {
    pub mode: ContextMode,
    /// Vector file for [`ContextMode::ExternalFrozen`].
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum ContextEncoder {
    TrainableSmall {
        embed: Embedding,
        encoder: TransformerEncoder,
        max_len: usize,
    },
    ExternalFrozen {
        vectors: BTreeMap<String, Vec<f64>>,
        dim: usize,
    },
}

#[derive(Deserialize)]
struct VectorRecord {
    instance: String,
    vector: Vec<f64>,
}

/// Read `{"instance": ..., "vector": [...]}` lines. All vectors must share a
/// dimension.
pub fn load_context_vectors(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    let mut dim = None;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: VectorRecord = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        if rec.vector.is_empty() || rec.vector.iter().any(|v| !v.is_finite()) {
            return Err(parse("vector must be non-empty and finite".into()));
        }
        match dim {
            None => dim = Some(rec.vector.len()),
            Some(d) if d != rec.vector.len() => {
                return Err(parse(format!("vector has dimension {}, expected {d}", rec.vector.len())))
            }
            _ => {}
        }
        out.insert(rec.instance, rec.vector);
    }
    Ok(out)
}

impl ContextEncoder {
    pub(crate) fn trainable(config: &EncoderConfig) -> Self {
        let d = config.embed_dim;
        Self::TrainableSmall {
            embed: Embedding::new("context.embed", config.vocab_size, d),
            encoder: TransformerEncoder::new(
                "context.encoder",
                d,
                config.hidden_dim,
                config.num_heads,
                1,
                config.max_sequence_length,
            ),
            max_len: config.max_sequence_length,
        }
    }

    pub fn external(vectors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let dim = vectors
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::Data("context vector table is empty".into()))?;
        if vectors.values().any(|v| v.len() != dim) {
            return Err(Error::Data("context vectors differ in dimension".into()));
        }
        Ok(Self::ExternalFrozen { vectors, dim })
    }

    pub(crate) fn from_config(context: &ContextConfig, encoder: &EncoderConfig) -> Result<Self> {
        match context.mode {
            ContextMode::TrainableSmall => Ok(Self::trainable(encoder)),
            ContextMode::ExternalFrozen => {
                let path = context
                    .vectors
                    .as_deref()
                    .ok_or_else(|| Error::Config("external-frozen context needs a vectors file".into()))?;
                Self::external(load_context_vectors(path)?)
            }
        }
    }

    pub fn mode(&self) -> ContextMode {
        match self {
            Self::TrainableSmall { .. } => ContextMode::TrainableSmall,
            Self::ExternalFrozen { .. } => ContextMode::ExternalFrozen,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::TrainableSmall { encoder, .. } => encoder.dim,
            Self::ExternalFrozen { dim, .. } => *dim,
        }
    }

    pub(crate) fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        if let Self::TrainableSmall { embed, encoder, .. } = self {
            embed.init(store, init);
            encoder.init(store, init);
        }
    }

    /// Context vector `[dim]` of the whole instance.
    ///
    /// The trainable encoder mean-pools a transformer over the instance's
    /// tokens, keeping the last `max_len` so the target is always seen.
    pub(crate) fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        vocab: &Vocab,
        instance: &TypedInstance,
    ) -> Result<Var> {
        match self {
            Self::TrainableSmall { embed, encoder, max_len } => {
                let mut ids: Vec<usize> = instance
                    .utterances()
                    .flat_map(|u| tokenize(&u.text))
                    .map(|t| vocab.id(&t))
                    .collect();
                if ids.len() > *max_len {
                    ids.drain(..ids.len() - max_len);
                }
                if ids.is_empty() {
                    ids.push(UNK);
                }
                let x = embed.forward(g, store, &ids);
                let h = encoder.forward(g, store, x, None, true);
                Ok(g.mean_rows(h, None))
            }
            Self::ExternalFrozen { vectors, .. } => {
                let id = instance.id();
                let v = vectors
                    .get(&id)
                    .ok_or_else(|| Error::Missing(format!("no context vector for instance {id}")))?;
                Ok(g.constant(Tensor::vector(v.clone())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::example_dialogue;

    #[test]
    fn external_lookup_and_missing_instance() {
        let d = example_dialogue();
        let inst = TypedInstance::from_dialogue(&d, 1);
        let enc = ContextEncoder::external([(inst.id(), vec![1.0, 2.0])].into_iter().collect()).unwrap();
        assert_eq!(enc.dim(), 2);
        let mut g = Graph::new();
        let v = enc.encode(&mut g, &ParamStore::new(), &Vocab::build(["x"]), &inst).unwrap();
        assert_eq!(g.value(v).data(), &[1.0, 2.0]);
        let other = TypedInstance::from_dialogue(&d, 2);
        assert!(matches!(
            enc.encode(&mut g, &ParamStore::new(), &Vocab::build(["x"]), &other),
            Err(Error::Missing(_))
        ));
    }

    #[test]
    fn vector_file_dimension_must_be_constant() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.jsonl");
        fs::write(&p, "{\"instance\":\"a#0\",\"vector\":[1,2]}\n{\"instance\":\"a#1\",\"vector\":[1]}\n").unwrap();
        match load_context_vectors(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
