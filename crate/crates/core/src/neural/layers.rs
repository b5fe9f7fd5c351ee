//! Trainable building blocks.
//!
//! Layers are lightweight descriptors: they know their parameter names and
//! dimensions, register initial values in a [`ParamStore`], and build forward
//! computations on a [`Graph`] by binding those names.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{Initializer, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Filled in from the training vocabulary when left at zero.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub dropout_rate: f64,
    pub max_sequence_length: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            embed_dim: 32,
            hidden_dim: 32,
            num_layers: 1,
            num_heads: 4,
            dropout_rate: 0.0,
            max_sequence_length: 48,
            seed: 13,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("max_sequence_length", self.max_sequence_length),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: String,
    bias: Option<String>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new(prefix: &str, input_dim: usize, output_dim: usize) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: Some(format!("{prefix}.bias")),
            input_dim,
            output_dim,
        }
    }

    pub fn without_bias(prefix: &str, input_dim: usize, output_dim: usize) -> Self {
        Self {
            bias: None,
            ..Self::new(prefix, input_dim, output_dim)
        }
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        store.insert(
            &self.weight,
            init.uniform(&[self.input_dim, self.output_dim], self.input_dim),
        );
        if let Some(b) = &self.bias {
            store.insert(b, Tensor::zeros(&[self.output_dim]));
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, &self.weight);
        let y = g.matmul(x, w);
        match &self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    table: String,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(name: &str, rows: usize, dim: usize) -> Self {
        Self {
            table: name.to_string(),
            rows,
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        // fan-in 1 keeps embeddings at unit scale
        store.insert(&self.table, init.uniform(&[self.rows, self.dim], 1));
    }

    /// Rows for `ids`, clamping out-of-range ids to the last row.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Var {
        let t = g.param(store, &self.table);
        let idx: Vec<usize> = ids.iter().map(|&i| i.min(self.rows - 1)).collect();
        g.gather_rows(t, &idx)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gain: String,
    bias: String,
    dim: usize,
}

impl LayerNorm {
    pub fn new(prefix: &str, dim: usize) -> Self {
        Self {
            gain: format!("{prefix}.gain"),
            bias: format!("{prefix}.bias"),
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore) {
        store.insert(&self.gain, Tensor::filled(&[self.dim], 1.0));
        store.insert(&self.bias, Tensor::zeros(&[self.dim]));
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let n = g.layer_norm(x);
        let gain = g.param(store, &self.gain);
        let bias = g.param(store, &self.bias);
        let y = g.mul_row(n, gain);
        g.add_row(y, bias)
    }
}

/// Attention mask over a `[queries, keys]` score matrix, `true` = allowed.
pub fn pair_mask(query_mask: &[bool], key_mask: &[bool], causal: bool) -> Vec<bool> {
    let mut m = Vec::with_capacity(query_mask.len() * key_mask.len());
    for (i, q) in query_mask.iter().enumerate() {
        for (j, k) in key_mask.iter().enumerate() {
            m.push(*q && *k && (!causal || j <= i));
        }
    }
    m
}

/// Multi-head scaled dot-product attention with learned projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    heads: usize,
    dim: usize,
}

impl MultiHeadAttention {
    pub fn new(prefix: &str, dim: usize, heads: usize) -> Self {
        Self {
            query: Linear::new(&format!("{prefix}.query"), dim, dim),
            key: Linear::new(&format!("{prefix}.key"), dim, dim),
            value: Linear::new(&format!("{prefix}.value"), dim, dim),
            output: Linear::new(&format!("{prefix}.output"), dim, dim),
            heads,
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        for l in [&self.query, &self.key, &self.value, &self.output] {
            l.init(store, init);
        }
    }

    /// `queries` is `[Lq, d]`, `memory` is `[Lk, d]`, `mask` is `[Lq * Lk]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        queries: Var,
        memory: Var,
        mask: Option<&[bool]>,
    ) -> Var {
        let q = self.query.forward(g, store, queries);
        let k = self.key.forward(g, store, memory);
        let v = self.value.forward(g, store, memory);
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scores = g.scale(scores, scale);
            let weights = g.softmax(scores, mask);
            heads.push(g.matmul(weights, vh));
        }
        let ctx = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)
        };
        self.output.forward(g, store, ctx)
    }
}

/// Post-norm transformer layer: self-attention, optional cross-attention,
/// position-wise feed-forward.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    self_attn: MultiHeadAttention,
    self_norm: LayerNorm,
    cross: Option<(MultiHeadAttention, LayerNorm)>,
    ffn_in: Linear,
    ffn_out: Linear,
    ffn_norm: LayerNorm,
}

impl TransformerLayer {
    pub fn new(prefix: &str, dim: usize, ffn_dim: usize, heads: usize, with_cross: bool) -> Self {
        Self {
            self_attn: MultiHeadAttention::new(&format!("{prefix}.attn"), dim, heads),
            self_norm: LayerNorm::new(&format!("{prefix}.attn_norm"), dim),
            cross: with_cross.then(|| {
                (
                    MultiHeadAttention::new(&format!("{prefix}.cross"), dim, heads),
                    LayerNorm::new(&format!("{prefix}.cross_norm"), dim),
                )
            }),
            ffn_in: Linear::new(&format!("{prefix}.ffn_in"), dim, ffn_dim),
            ffn_out: Linear::new(&format!("{prefix}.ffn_out"), ffn_dim, dim),
            ffn_norm: LayerNorm::new(&format!("{prefix}.ffn_norm"), dim),
        }
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        self.self_attn.init(store, init);
        self.self_norm.init(store);
        if let Some((attn, norm)) = &self.cross {
            attn.init(store, init);
            norm.init(store);
        }
        self.ffn_in.init(store, init);
        self.ffn_out.init(store, init);
        self.ffn_norm.init(store);
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        self_mask: Option<&[bool]>,
        cross: Option<(Var, Option<&[bool]>)>,
    ) -> Var {
        let a = self.self_attn.forward(g, store, x, x, self_mask);
        let a = g.dropout(a);
        let s = g.add(x, a);
        let mut x = self.self_norm.forward(g, store, s);
        if let (Some((attn, norm)), Some((memory, mask))) = (&self.cross, cross) {
            let c = attn.forward(g, store, x, memory, mask);
            let c = g.dropout(c);
            let s = g.add(x, c);
            x = norm.forward(g, store, s);
        }
        let h = self.ffn_in.forward(g, store, x);
        let h = g.relu(h);
        let f = self.ffn_out.forward(g, store, h);
        let f = g.dropout(f);
        let s = g.add(x, f);
        self.ffn_norm.forward(g, store, s)
    }
}

/// Stack of transformer layers with optional learned positional embeddings.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    layers: Vec<TransformerLayer>,
    positions: Option<Embedding>,
    pub dim: usize,
}

impl TransformerEncoder {
    pub fn new(prefix: &str, dim: usize, ffn_dim: usize, heads: usize, layers: usize, max_len: usize) -> Self {
        Self::build(prefix, dim, ffn_dim, heads, layers, max_len, false)
    }

    /// Decoder variant: every layer also cross-attends to a memory sequence.
    pub fn decoder(prefix: &str, dim: usize, ffn_dim: usize, heads: usize, layers: usize, max_len: usize) -> Self {
        Self::build(prefix, dim, ffn_dim, heads, layers, max_len, true)
    }

    fn build(
        prefix: &str,
        dim: usize,
        ffn_dim: usize,
        heads: usize,
        layers: usize,
        max_len: usize,
        cross: bool,
    ) -> Self {
        Self {
            layers: (0..layers)
                .map(|i| TransformerLayer::new(&format!("{prefix}.layer{i}"), dim, ffn_dim, heads, cross))
                .collect(),
            positions: (max_len > 0).then(|| Embedding::new(&format!("{prefix}.positions"), max_len, dim)),
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        if let Some(p) = &self.positions {
            p.init(store, init);
        }
        for l in &self.layers {
            l.init(store, init);
        }
    }

    /// Encode `x` (`[L, d]`). `mask` marks real positions; masked positions
    /// neither attend nor are attended to.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mask: Option<&[bool]>,
        use_positional: bool,
    ) -> Var {
        self.run(g, store, x, mask, use_positional, false, None)
    }

    /// Causal self-attention plus cross-attention over `memory`.
    pub fn decode(&self, g: &mut Graph, store: &ParamStore, x: Var, memory: Var) -> Var {
        self.run(g, store, x, None, true, true, Some(memory))
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mask: Option<&[bool]>,
        use_positional: bool,
        causal: bool,
        memory: Option<Var>,
    ) -> Var {
        let len = g.value(x).rows();
        let mut h = x;
        if use_positional {
            if let Some(p) = &self.positions {
                let idx: Vec<usize> = (0..len).collect();
                let pos = p.forward(g, store, &idx);
                h = g.add(h, pos);
            }
        }
        let self_mask = match (mask, causal) {
            (None, false) => None,
            (m, _) => {
                let m = m.map(<[bool]>::to_vec).unwrap_or_else(|| vec![true; len]);
                Some(pair_mask(&m, &m, causal))
            }
        };
        for layer in &self.layers {
            let cross = memory.map(|mem| (mem, None));
            h = layer.forward(g, store, h, self_mask.as_deref(), cross);
        }
        h
    }
}

/// Single-direction GRU (Cho et al. formulation).
#[derive(Debug, Clone)]
pub struct Gru {
    w_update: Linear,
    u_update: Linear,
    w_reset: Linear,
    u_reset: Linear,
    w_cand: Linear,
    u_cand: Linear,
    pub hidden: usize,
}

impl Gru {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize) -> Self {
        Self {
            w_update: Linear::new(&format!("{prefix}.w_update"), input_dim, hidden),
            u_update: Linear::without_bias(&format!("{prefix}.u_update"), hidden, hidden),
            w_reset: Linear::new(&format!("{prefix}.w_reset"), input_dim, hidden),
            u_reset: Linear::without_bias(&format!("{prefix}.u_reset"), hidden, hidden),
            w_cand: Linear::new(&format!("{prefix}.w_cand"), input_dim, hidden),
            u_cand: Linear::without_bias(&format!("{prefix}.u_cand"), hidden, hidden),
            hidden,
        }
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        for l in [
            &self.w_update,
            &self.u_update,
            &self.w_reset,
            &self.u_reset,
            &self.w_cand,
            &self.u_cand,
        ] {
            l.init(store, init);
        }
    }

    /// Hidden state after each step of `x` (`[L, in]`), in step order.
    pub fn run(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Vec<Var> {
        let len = g.value(x).rows();
        let xz = self.w_update.forward(g, store, x);
        let xr = self.w_reset.forward(g, store, x);
        let xc = self.w_cand.forward(g, store, x);
        let mut h = g.constant(Tensor::zeros(&[self.hidden]));
        let mut states = Vec::with_capacity(len);
        for t in 0..len {
            let hz = self.u_update.forward(g, store, h);
            let xz_t = g.row(xz, t);
            let z = g.add(xz_t, hz);
            let z = g.sigmoid(z);
            let hr = self.u_reset.forward(g, store, h);
            let xr_t = g.row(xr, t);
            let r = g.add(xr_t, hr);
            let r = g.sigmoid(r);
            let rh = g.mul(r, h);
            let hc = self.u_cand.forward(g, store, rh);
            let xc_t = g.row(xc, t);
            let cand = g.add(xc_t, hc);
            let cand = g.tanh(cand);
            // h = z * h_prev + (1 - z) * cand
            let diff = g.sub(h, cand);
            let zd = g.mul(z, diff);
            h = g.add(cand, zd);
            states.push(h);
        }
        states
    }
}

/// Output of [`BiGru::forward`].
#[derive(Debug, Clone, Copy)]
pub struct BiGruOutput {
    /// `[L, 2 * hidden]`: forward state then backward state per position.
    pub states: Var,
    /// `[2 * hidden]`: final forward state then final backward state.
    pub summary: Var,
}

#[derive(Debug, Clone)]
pub struct BiGru {
    forward: Gru,
    backward: Gru,
}

impl BiGru {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize) -> Self {
        Self {
            forward: Gru::new(&format!("{prefix}.fwd"), input_dim, hidden),
            backward: Gru::new(&format!("{prefix}.bwd"), input_dim, hidden),
        }
    }

    /// Both directions bound to the same parameters.
    pub fn shared(prefix: &str, input_dim: usize, hidden: usize) -> Self {
        let gru = Gru::new(prefix, input_dim, hidden);
        Self {
            forward: gru.clone(),
            backward: gru,
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        self.forward.init(store, init);
        self.backward.init(store, init);
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> BiGruOutput {
        let len = g.value(x).rows();
        let fwd = self.forward.run(g, store, x);
        let rev_idx: Vec<usize> = (0..len).rev().collect();
        let reversed = g.gather_rows(x, &rev_idx);
        let mut bwd = self.backward.run(g, store, reversed);
        bwd.reverse();
        let rows: Vec<Var> = fwd
            .iter()
            .zip(&bwd)
            .map(|(f, b)| g.concat_cols(&[*f, *b]))
            .collect();
        let states = g.concat_rows(&rows);
        let summary = g.concat_cols(&[fwd[len - 1], bwd[0]]);
        BiGruOutput { states, summary }
    }
}

/// Additive (single hidden layer) attention scoring
/// `v · tanh(W_q q + W_k k_j + b)`.
#[derive(Debug, Clone)]
pub struct AdditiveAttention {
    query: Linear,
    key: Linear,
    score: Linear,
}

impl AdditiveAttention {
    pub fn new(prefix: &str, query_dim: usize, key_dim: usize, hidden: usize) -> Self {
        Self {
            query: Linear::new(&format!("{prefix}.query"), query_dim, hidden),
            key: Linear::without_bias(&format!("{prefix}.key"), key_dim, hidden),
            score: Linear::without_bias(&format!("{prefix}.score"), hidden, 1),
        }
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) {
        self.query.init(store, init);
        self.key.init(store, init);
        self.score.init(store, init);
    }

    /// Returns `(context [dv], weights [L])` for a 1-D `query`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        query: Var,
        keys: Var,
        values: Var,
        mask: Option<&[bool]>,
    ) -> (Var, Var) {
        let len = g.value(keys).rows();
        let kq = self.key.forward(g, store, keys);
        let qq = self.query.forward(g, store, query);
        let hidden = g.add_row(kq, qq);
        let hidden = g.tanh(hidden);
        let scores = self.score.forward(g, store, hidden);
        let scores = g.reshape(scores, vec![1, len]);
        weighted_sum(g, scores, values, mask)
    }
}

fn weighted_sum(g: &mut Graph, scores: Var, values: Var, mask: Option<&[bool]>) -> (Var, Var) {
    let len = g.value(scores).cols();
    let weights = g.softmax(scores, mask);
    let ctx = g.matmul(weights, values);
    let dv = g.value(ctx).cols();
    let ctx = g.reshape(ctx, vec![dv]);
    let weights = g.reshape(weights, vec![len]);
    (ctx, weights)
}

/// Scaled dot-product attention of a single query over `keys`, as graph ops.
pub fn dot_attention(g: &mut Graph, query: Var, keys: Var, values: Var, mask: Option<&[bool]>) -> (Var, Var) {
    let d = g.value(query).len();
    let len = g.value(keys).rows();
    let q = g.reshape(query, vec![d, 1]);
    let scores = g.matmul(keys, q);
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    let scores = g.reshape(scores, vec![1, len]);
    weighted_sum(g, scores, values, mask)
}

/// Attention of `query` (`[d_q]`) over `keys` (`[L, d_q]`) and `values`
/// (`[L, d_v]`), returning `(context [d_v], weights [L])`.
///
/// Weights are a softmax of scaled dot products over unmasked positions and
/// are exactly zero at masked ones.
pub fn attention(
    query: &Tensor,
    keys: &Tensor,
    values: &Tensor,
    mask: Option<&[bool]>,
) -> Result<(Tensor, Tensor)> {
    let len = keys.rows();
    if query.ndim() != 1 || keys.ndim() != 2 || values.ndim() != 2 {
        return Err(Error::Shape("query must be 1-D; keys and values 2-D".into()));
    }
    if keys.cols() != query.len() {
        return Err(Error::Shape(format!(
            "query dim {} vs key dim {}",
            query.len(),
            keys.cols()
        )));
    }
    if values.rows() != len {
        return Err(Error::Shape(format!("{len} keys but {} values", values.rows())));
    }
    if let Some(m) = mask {
        if m.len() != len {
            return Err(Error::Shape(format!("mask length {} vs {len} keys", m.len())));
        }
        if !m.iter().any(|b| *b) {
            return Err(Error::InvalidArgument("all attention positions are masked".into()));
        }
    }
    let mut g = Graph::new();
    let q = g.constant(query.clone());
    let k = g.constant(keys.clone());
    let v = g.constant(values.clone());
    let (ctx, w) = dot_attention(&mut g, q, k, v, mask);
    Ok((g.value(ctx).clone(), g.value(w).clone()))
}
