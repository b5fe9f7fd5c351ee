//! Central finite-difference checks against the tape gradients.

use spc_core::neural::{Graph, ParamStore, Tensor, Var};

const STEP: f64 = 1e-5;
const GRADIENT_FLOOR: f64 = 1e-6;

fn value(store: &ParamStore, loss: &impl Fn(&mut Graph, &ParamStore) -> Var) -> f64 {
    let mut g = Graph::new();
    let l = loss(&mut g, store);
    g.value(l).data()[0]
}

/// Relative error `|a - n| / max(|a|, |n|)` over each parameter tensor,
/// worst tensor first. The denominator is floored at 1e-6, below which
/// central differences only resolve rounding noise (the key bias of an
/// attention layer, for one, has an exactly zero gradient).
pub fn param_errors(store: &ParamStore, loss: impl Fn(&mut Graph, &ParamStore) -> Var) -> Vec<(String, f64)> {
    let mut g = Graph::new();
    let l = loss(&mut g, store);
    let grads = g.backward(l);
    let analytic = g.param_grads(&grads);
    let mut out = Vec::new();
    for (name, tensor) in store.iter() {
        let a = analytic
            .get(name)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tensor.shape()));
        let mut diff = 0.0;
        let mut scale = 0.0f64;
        for i in 0..tensor.len() {
            let mut plus = store.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += STEP;
            let mut minus = store.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= STEP;
            let numeric = (value(&plus, &loss) - value(&minus, &loss)) / (2.0 * STEP);
            diff += (a.data()[i] - numeric).powi(2);
            scale = scale.max(a.data()[i].abs()).max(numeric.abs());
        }
        let err = diff.sqrt() / scale.max(GRADIENT_FLOOR);
        out.push((name.clone(), err));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

pub fn max_error(errors: &[(String, f64)]) -> f64 {
    errors.iter().map(|e| e.1).fold(0.0, f64::max)
}

/// Reduce an output to a scalar with fixed, uneven weights so every entry
/// gets a distinct upstream gradient.
pub fn weighted_sum(g: &mut Graph, x: Var) -> Var {
    let t = g.value(x).clone();
    let w: Vec<f64> = (0..t.len()).map(|i| ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect();
    let w = g.constant(Tensor::new(t.shape().to_vec(), w).unwrap());
    let p = g.mul(x, w);
    g.sum(p)
}

/// Worst relative errors of the boundary-loss gradients w.r.t. the
/// representations, the centroids and the raw radii on one random batch.
pub fn boundary_errors(seed: u64) -> [f64; 3] {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use spc_core::neural::softplus;
    use spc_core::typeid::{boundary_loss, boundary_loss_grad, BoundaryModel};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=8);
    let n = rng.random_range(2..=16);
    let centroids: Vec<f64> = (0..5 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.5)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
    let mut z = Vec::with_capacity(n * d);
    for &y in &labels {
        // Keep every point clear of its boundary, where the loss has a kink.
        loop {
            let p: Vec<f64> = (0..d).map(|j| centroids[y * d + j] + rng.random_range(-1.5..1.5)).collect();
            let dist = p
                .iter()
                .zip(&centroids[y * d..(y + 1) * d])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if (dist - softplus(raw[y])).abs() > 0.05 && dist > 0.05 {
                z.extend(p);
                break;
            }
        }
    }
    let build = |z: &[f64], c: &[f64], r: &[f64]| {
        let b = BoundaryModel::new(
            Tensor::new(vec![5, d], c.to_vec()).unwrap(),
            Tensor::vector(r.to_vec()),
        )
        .unwrap();
        (Tensor::new(vec![n, d], z.to_vec()).unwrap(), b)
    };
    let loss = |z: &[f64], c: &[f64], r: &[f64]| {
        let (z, b) = build(z, c, r);
        boundary_loss(&z, &labels, &b).unwrap()
    };
    let (zt, b) = build(&z, &centroids, &raw);
    let g = boundary_loss_grad(&zt, &labels, &b).unwrap();

    let h = 1e-6;
    let numeric = |which: usize, len: usize| -> Vec<f64> {
        (0..len)
            .map(|i| {
                let mut args = [z.clone(), centroids.clone(), raw.clone()];
                args[which][i] += h;
                let up = loss(&args[0], &args[1], &args[2]);
                args[which][i] -= 2.0 * h;
                let down = loss(&args[0], &args[1], &args[2]);
                (up - down) / (2.0 * h)
            })
            .collect()
    };
    let rel = |a: &[f64], b: &[f64]| {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
        diff / scale.max(GRADIENT_FLOOR)
    };
    [
        rel(g.grad_z.data(), &numeric(0, n * d)),
        rel(g.grad_centroids.data(), &numeric(1, 5 * d)),
        rel(g.grad_raw_radii.data(), &numeric(2, 5)),
    ]
}

fn random(init: &mut spc_core::neural::Initializer, shape: &[usize]) -> Tensor {
    init.uniform(shape, 1)
}

/// Worst parameter-gradient error for each neural building block on small
/// shapes. Inputs are stored as parameters so they are checked too.
pub fn neural_suite() -> Vec<(&'static str, f64)> {
    use spc_core::neural::{
        dot_attention, AdditiveAttention, BiGru, Initializer, Linear, MultiHeadAttention, TransformerEncoder,
        TransformerLayer,
    };

    let mut out = Vec::new();

    let mut init = Initializer::new(11);
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new("mha", 4, 2);
    mha.init(&mut store, &mut init);
    store.insert("x.q", random(&mut init, &[3, 4]));
    store.insert("x.m", random(&mut init, &[5, 4]));
    let mask: Vec<bool> = (0..15).map(|i| i % 5 != 4).collect();
    let e = param_errors(&store, |g, s| {
        let q = g.param(s, "x.q");
        let m = g.param(s, "x.m");
        let y = mha.forward(g, s, q, m, Some(&mask));
        weighted_sum(g, y)
    });
    out.push(("multi-head attention", max_error(&e)));

    let mut store = ParamStore::new();
    let add = AdditiveAttention::new("add", 3, 4, 5);
    add.init(&mut store, &mut init);
    store.insert("x.q", random(&mut init, &[3]));
    store.insert("x.k", random(&mut init, &[4, 4]));
    store.insert("x.v", random(&mut init, &[4, 2]));
    let e = param_errors(&store, |g, s| {
        let q = g.param(s, "x.q");
        let k = g.param(s, "x.k");
        let v = g.param(s, "x.v");
        let (ctx, w) = add.forward(g, s, q, k, v, Some(&[true, true, false, true]));
        let a = weighted_sum(g, ctx);
        let b = weighted_sum(g, w);
        g.add(a, b)
    });
    out.push(("additive attention", max_error(&e)));

    let mut store = ParamStore::new();
    store.insert("x.q", random(&mut init, &[4]));
    store.insert("x.k", random(&mut init, &[3, 4]));
    store.insert("x.v", random(&mut init, &[3, 2]));
    let e = param_errors(&store, |g, s| {
        let q = g.param(s, "x.q");
        let k = g.param(s, "x.k");
        let v = g.param(s, "x.v");
        let (ctx, _) = dot_attention(g, q, k, v, None);
        weighted_sum(g, ctx)
    });
    out.push(("dot-product attention", max_error(&e)));

    let mut store = ParamStore::new();
    let gru = BiGru::new("gru", 3, 3);
    gru.init(&mut store, &mut init);
    store.insert("x", random(&mut init, &[4, 3]));
    let e = param_errors(&store, |g, s| {
        let x = g.param(s, "x");
        let o = gru.forward(g, s, x);
        let a = weighted_sum(g, o.states);
        let b = weighted_sum(g, o.summary);
        g.add(a, b)
    });
    out.push(("bigru", max_error(&e)));

    let mut store = ParamStore::new();
    let layer = TransformerLayer::new("tl", 4, 6, 2, true);
    layer.init(&mut store, &mut init);
    store.insert("x", random(&mut init, &[3, 4]));
    store.insert("m", random(&mut init, &[2, 4]));
    let e = param_errors(&store, |g, s| {
        let x = g.param(s, "x");
        let m = g.param(s, "m");
        let y = layer.forward(g, s, x, None, Some((m, None)));
        weighted_sum(g, y)
    });
    out.push(("transformer layer", max_error(&e)));

    let mut store = ParamStore::new();
    let enc = TransformerEncoder::new("enc", 4, 6, 2, 2, 5);
    enc.init(&mut store, &mut init);
    store.insert("x", random(&mut init, &[4, 4]));
    let mask = [true, true, true, false];
    let e = param_errors(&store, |g, s| {
        let x = g.param(s, "x");
        let y = enc.forward(g, s, x, Some(&mask), true);
        let y = g.mean_rows(y, Some(&mask));
        weighted_sum(g, y)
    });
    out.push(("transformer encoder", max_error(&e)));

    let mut store = ParamStore::new();
    let dec = TransformerEncoder::decoder("dec", 4, 6, 2, 1, 5);
    dec.init(&mut store, &mut init);
    store.insert("x", random(&mut init, &[3, 4]));
    store.insert("m", random(&mut init, &[4, 4]));
    let e = param_errors(&store, |g, s| {
        let x = g.param(s, "x");
        let m = g.param(s, "m");
        let y = dec.decode(g, s, x, m);
        weighted_sum(g, y)
    });
    out.push(("transformer decoder", max_error(&e)));

    let mut store = ParamStore::new();
    let head = Linear::new("head", 4, 5);
    head.init(&mut store, &mut init);
    store.insert("x", random(&mut init, &[3, 4]));
    let e = param_errors(&store, |g, s| {
        let x = g.param(s, "x");
        let logits = head.forward(g, s, x);
        g.cross_entropy(logits, &[4, 0, 2])
    });
    out.push(("cross-entropy head (5 classes)", max_error(&e)));

    let mut store = ParamStore::new();
    let fc1 = Linear::new("fc1", 4, 3);
    let fc2 = Linear::new("fc2", 3, 2);
    fc1.init(&mut store, &mut init);
    fc2.init(&mut store, &mut init);
    store.insert("x", random(&mut init, &[5, 4]));
    let e = param_errors(&store, |g, s| {
        let x = g.param(s, "x");
        let h = fc1.forward(g, s, x);
        let h = g.tanh(h);
        let logits = fc2.forward(g, s, h);
        g.cross_entropy(logits, &[1, 0, 0, 1, 1])
    });
    out.push(("cross-entropy head (binary)", max_error(&e)));

    out
}
