//! Minimal differentiable building blocks shared by the three stage models.

mod checkpoint;
mod graph;
mod layers;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, FORMAT as CHECKPOINT_FORMAT, VERSION as CHECKPOINT_VERSION};
pub(crate) use checkpoint::{check_params, write_sidecar};
pub use graph::{sigmoid, softplus, Gradients, Graph, Var};
pub use layers::{
    attention, dot_attention, pair_mask, AdditiveAttention, BiGru, BiGruOutput, Embedding, EncoderConfig, Gru,
    LayerNorm, Linear, MultiHeadAttention, TransformerEncoder, TransformerLayer,
};
pub use params::{Adam, AdamConfig, Initializer, ParamStore};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Run a bidirectional GRU over `tokens` (`[L, in]`), returning
/// `(states [L, 2h], summary [2h])`.
pub fn bigru_encode(gru: &BiGru, store: &ParamStore, tokens: &Tensor) -> Result<(Tensor, Tensor)> {
    if tokens.ndim() != 2 {
        return Err(Error::Shape("token matrix must be 2-D".into()));
    }
    let mut g = Graph::new();
    let x = g.constant(tokens.clone());
    let out = gru.forward(&mut g, store, x);
    Ok((g.value(out.states).clone(), g.value(out.summary).clone()))
}

/// Encode `seq` (`[L, d]`) with a transformer stack.
pub fn transformer_encode(
    encoder: &TransformerEncoder,
    store: &ParamStore,
    seq: &Tensor,
    mask: Option<&[bool]>,
    use_positional: bool,
) -> Result<Tensor> {
    if seq.ndim() != 2 {
        return Err(Error::Shape("sequence must be 2-D".into()));
    }
    if seq.cols() != encoder.dim {
        return Err(Error::Shape(format!(
            "sequence width {} vs encoder width {}",
            seq.cols(),
            encoder.dim
        )));
    }
    if let Some(m) = mask {
        if m.len() != seq.rows() {
            return Err(Error::Shape("mask length differs from sequence length".into()));
        }
        if !m.iter().any(|b| *b) {
            return Err(Error::InvalidArgument("all sequence positions are masked".into()));
        }
    }
    let mut g = Graph::new();
    let x = g.constant(seq.clone());
    let y = encoder.forward(&mut g, store, x, mask, use_positional);
    Ok(g.value(y).clone())
}
