//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its forward
//! value, and [`Graph::backward`] walks the tape in reverse accumulating
//! gradients. Shape errors inside the graph are programming errors and panic;
//! public entry points validate user-supplied shapes before building graphs.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softplus(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Softmax(Var, Option<Vec<bool>>),
    LayerNorm(Var, Vec<f64>),
    MeanRows(Var, Vec<bool>),
    Sum(Var),
    CrossEntropy(Var, Vec<usize>, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradient of `v`, or zeros when nothing flowed into it.
    pub fn get_or_zero(&self, v: Var) -> Tensor {
        self.get(v).unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            dropout: None,
        }
    }

    /// A graph whose [`Graph::dropout`] calls are active.
    pub fn with_dropout(rate: f64, seed: u64) -> Self {
        let mut g = Self::new();
        if rate > 0.0 {
            g.dropout = Some((rate, ChaCha8Rng::seed_from_u64(seed)));
        }
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        debug_assert!(value.is_finite(), "non-finite value from {op:?}");
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Bind a named parameter from `store`; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(v) = self.params.get(name) {
            return *v;
        }
        let value = store
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .clone();
        let v = self.leaf(value, true);
        self.params.insert(name.to_string(), v);
        v
    }

    /// Gradients of every bound parameter, keyed by name.
    pub fn param_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(name, v)| (name.clone(), grads.get_or_zero(*v)))
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = dims(av);
        let (k2, n) = dims(bv);
        assert_eq!(k, k2, "matmul inner dimensions {k} vs {k2}");
        let (ad, bd) = (av.data(), bv.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = ad[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let shape = if av.ndim() == 1 { vec![n] } else { vec![m, n] };
        let t = Tensor::new(shape, out).expect("matmul shape");
        self.push(t, Op::MatMul(a, b), &[a, b])
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len(), "elementwise op on {:?} and {:?}", av.shape(), bv.shape());
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data).expect("shape");
        self.push(t, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Broadcast-add a row vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let c = av.cols();
        assert_eq!(bv.len(), c, "add_row width");
        let mut data = av.data().to_vec();
        for chunk in data.chunks_mut(c) {
            for (x, y) in chunk.iter_mut().zip(bv.data()) {
                *x += y;
            }
        }
        let t = Tensor::new(av.shape().to_vec(), data).expect("shape");
        self.push(t, Op::AddRow(a, b), &[a, b])
    }

    /// Broadcast-multiply every row of `a` by the row vector `b`.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let c = av.cols();
        assert_eq!(bv.len(), c, "mul_row width");
        let mut data = av.data().to_vec();
        for chunk in data.chunks_mut(c) {
            for (x, y) in chunk.iter_mut().zip(bv.data()) {
                *x *= y;
            }
        }
        let t = Tensor::new(av.shape().to_vec(), data).expect("shape");
        self.push(t, Op::MulRow(a, b), &[a, b])
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| f(*x)).collect();
        let t = Tensor::new(av.shape().to_vec(), data).expect("shape");
        self.push(t, op, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, Op::Softplus(a), softplus)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (r, c) = dims(av);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = av.data()[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], data).expect("shape");
        self.push(t, Op::Transpose(a), &[a])
    }

    /// Concatenate along the last axis; all parts share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let all_vectors = parts.iter().all(|p| self.value(*p).ndim() == 1);
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let pv = self.value(*p);
                assert_eq!(pv.rows(), rows, "concat_cols row count");
                data.extend_from_slice(pv.row(r));
            }
        }
        let shape = if all_vectors { vec![total] } else { vec![rows, total] };
        let t = Tensor::new(shape, data).expect("shape");
        self.push(t, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Stack along the first axis; all parts share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.cols(), cols, "concat_rows column count");
            data.extend_from_slice(pv.data());
        }
        let rows = data.len() / cols;
        let t = Tensor::new(vec![rows, cols], data).expect("shape");
        self.push(t, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        let (r, c) = dims(av);
        assert!(start + len <= c, "slice_cols out of range");
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&av.row(i)[start..start + len]);
        }
        let shape = if av.ndim() == 1 { vec![len] } else { vec![r, len] };
        let t = Tensor::new(shape, data).expect("shape");
        self.push(t, Op::SliceCols(a, start), &[a])
    }

    /// Select rows by index (embedding lookup, sub-sequence selection).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        assert!(!idx.is_empty(), "gather of no rows");
        let av = self.value(a);
        let c = av.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < av.rows(), "row {i} out of range {}", av.rows());
            data.extend_from_slice(av.row(i));
        }
        let t = Tensor::new(vec![idx.len(), c], data).expect("shape");
        self.push(t, Op::GatherRows(a, idx.to_vec()), &[a])
    }

    /// Row `i` of `a` as a 1-D tensor.
    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let r = self.gather_rows(a, &[i]);
        let c = self.value(r).cols();
        self.reshape(r, vec![c])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let t = self.value(a).clone().reshape(shape).expect("reshape");
        self.push(t, Op::Reshape(a), &[a])
    }

    /// Row-wise softmax. Masked entries (`false`) get exactly zero weight; a
    /// row with no unmasked entry is all zeros.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let av = self.value(a);
        let (r, c) = dims(av);
        if let Some(m) = mask {
            assert_eq!(m.len(), r * c, "softmax mask size");
        }
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = av.row(i);
            let ok = |j: usize| mask.is_none_or(|m| m[i * c + j]);
            let max = (0..c)
                .filter(|&j| ok(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for j in 0..c {
                if ok(j) {
                    let e = (row[j] - max).exp();
                    data[i * c + j] = e;
                    total += e;
                }
            }
            for j in 0..c {
                data[i * c + j] /= total;
            }
        }
        let t = Tensor::new(av.shape().to_vec(), data).expect("shape");
        self.push(t, Op::Softmax(a, mask.map(<[bool]>::to_vec)), &[a])
    }

    /// Normalize each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var) -> Var {
        const EPS: f64 = 1e-5;
        let av = self.value(a);
        let (r, c) = dims(av);
        let mut data = vec![0.0; r * c];
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = av.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + EPS).sqrt();
            inv_std.push(inv);
            for j in 0..c {
                data[i * c + j] = (row[j] - mean) * inv;
            }
        }
        let t = Tensor::new(av.shape().to_vec(), data).expect("shape");
        self.push(t, Op::LayerNorm(a, inv_std), &[a])
    }

    /// Mean over the rows selected by `mask`, as a 1-D tensor.
    pub fn mean_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let av = self.value(a);
        let (r, c) = dims(av);
        let mask = mask.map(<[bool]>::to_vec).unwrap_or_else(|| vec![true; r]);
        assert_eq!(mask.len(), r, "mean_rows mask size");
        let count = mask.iter().filter(|m| **m).count();
        assert!(count > 0, "mean over zero rows");
        let mut data = vec![0.0; c];
        for i in (0..r).filter(|&i| mask[i]) {
            for (d, x) in data.iter_mut().zip(av.row(i)) {
                *d += x;
            }
        }
        for d in &mut data {
            *d /= count as f64;
        }
        let t = Tensor::vector(data);
        self.push(t, Op::MeanRows(a, mask), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Mean softmax cross-entropy of `logits` rows against class `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        let (r, c) = dims(lv);
        assert_eq!(targets.len(), r, "one target per row");
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            assert!(t < c, "target {t} out of range {c}");
            let row = lv.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            loss += lse - row[t];
        }
        loss /= r as f64;
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy(logits, targets.to_vec(), probs),
            &[logits],
        )
    }

    /// Inverted dropout; identity unless the graph was built with a rate.
    pub fn dropout(&mut self, a: Var) -> Var {
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return a;
        };
        let rate = *rate;
        let shape = self.nodes[a.0].value.shape().to_vec();
        let n: usize = shape.iter().product();
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let m = self.constant(Tensor::new(shape, mask).expect("shape"));
        self.mul(a, m)
    }

    /// Backpropagate from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if !node.requires_grad {
                grads[id] = Some(gout);
                continue;
            }
            self.backprop_node(node, &gout, &mut grads);
            grads[id] = Some(gout);
        }
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        }
    }

    fn backprop_node(&self, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(g) => {
                    for (a, b) in g.iter_mut().zip(contrib) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].value);
                let n = self.nodes[b.0].value.cols();
                let (ad, bd) = (val(*a), val(*b));
                if self.nodes[a.0].requires_grad {
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            let grow = &gout[i * n..(i + 1) * n];
                            ga[i * k + p] = brow.iter().zip(grow).map(|(x, y)| x * y).sum();
                        }
                    }
                    acc(*a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &gout[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = ad[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (g, y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *g += x * y;
                            }
                        }
                    }
                    acc(*b, gb);
                }
            }
            Op::Add(a, b) => {
                acc(*a, gout.to_vec());
                acc(*b, gout.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, gout.to_vec());
                acc(*b, gout.iter().map(|g| -g).collect());
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a), val(*b));
                acc(*a, gout.iter().zip(bd).map(|(g, y)| g * y).collect());
                acc(*b, gout.iter().zip(ad).map(|(g, x)| g * x).collect());
            }
            Op::AddRow(a, b) => {
                acc(*a, gout.to_vec());
                let c = self.nodes[b.0].value.len();
                let mut gb = vec![0.0; c];
                for chunk in gout.chunks(c) {
                    for (s, g) in gb.iter_mut().zip(chunk) {
                        *s += g;
                    }
                }
                acc(*b, gb);
            }
            Op::MulRow(a, b) => {
                let (ad, bd) = (val(*a), val(*b));
                let c = bd.len();
                let ga = gout
                    .chunks(c)
                    .flat_map(|chunk| chunk.iter().zip(bd).map(|(g, y)| g * y))
                    .collect();
                acc(*a, ga);
                let mut gb = vec![0.0; c];
                for (gchunk, achunk) in gout.chunks(c).zip(ad.chunks(c)) {
                    for j in 0..c {
                        gb[j] += gchunk[j] * achunk[j];
                    }
                }
                acc(*b, gb);
            }
            Op::Scale(a, s) => acc(*a, gout.iter().map(|g| g * s).collect()),
            Op::Tanh(a) => acc(*a, gout.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect()),
            Op::Sigmoid(a) => acc(*a, gout.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect()),
            Op::Relu(a) => acc(
                *a,
                gout.iter()
                    .zip(val(*a))
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect(),
            ),
            Op::Softplus(a) => acc(*a, gout.iter().zip(val(*a)).map(|(g, x)| g * sigmoid(*x)).collect()),
            Op::Transpose(a) => {
                // out is [c, r]; input is [r, c]
                let (r, c) = dims(&self.nodes[a.0].value);
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] = gout[j * r + i];
                    }
                }
                acc(*a, ga);
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.cols();
                    let mut gp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        gp.extend_from_slice(&gout[r * total + offset..r * total + offset + w]);
                    }
                    acc(*p, gp);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    acc(*p, gout[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = dims(&self.nodes[a.0].value);
                let w = node.value.cols();
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    ga[i * c + start..i * c + start + w].copy_from_slice(&gout[i * w..(i + 1) * w]);
                }
                acc(*a, ga);
            }
            Op::GatherRows(a, idx) => {
                let av = &self.nodes[a.0].value;
                let c = av.cols();
                let mut ga = vec![0.0; av.len()];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        ga[i * c + j] += gout[k * c + j];
                    }
                }
                acc(*a, ga);
            }
            Op::Reshape(a) => acc(*a, gout.to_vec()),
            Op::Softmax(a, mask) => {
                let (r, c) = dims(&node.value);
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    let y = &out[i * c..(i + 1) * c];
                    let g = &gout[i * c..(i + 1) * c];
                    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        let masked = mask.as_ref().is_some_and(|m| !m[i * c + j]);
                        if !masked {
                            ga[i * c + j] = y[j] * (g[j] - dot);
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::LayerNorm(a, inv_std) => {
                let (r, c) = dims(&node.value);
                let nf = c as f64;
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    let xhat = &out[i * c..(i + 1) * c];
                    let g = &gout[i * c..(i + 1) * c];
                    let sum_g: f64 = g.iter().sum();
                    let sum_gx: f64 = g.iter().zip(xhat).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        ga[i * c + j] = inv_std[i] / nf * (nf * g[j] - sum_g - xhat[j] * sum_gx);
                    }
                }
                acc(*a, ga);
            }
            Op::MeanRows(a, mask) => {
                let (r, c) = dims(&self.nodes[a.0].value);
                let count = mask.iter().filter(|m| **m).count() as f64;
                let mut ga = vec![0.0; r * c];
                for i in (0..r).filter(|&i| mask[i]) {
                    for j in 0..c {
                        ga[i * c + j] = gout[j] / count;
                    }
                }
                acc(*a, ga);
            }
            Op::Sum(a) => {
                let len = self.nodes[a.0].value.len();
                acc(*a, vec![gout[0]; len]);
            }
            Op::CrossEntropy(logits, targets, probs) => {
                let r = targets.len();
                let c = probs.len() / r;
                let mut ga = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    ga[i * c + t] -= 1.0;
                }
                let s = gout[0] / r as f64;
                for g in &mut ga {
                    *g *= s;
                }
                acc(*logits, ga);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
