//! Minimal f64 neural-network building blocks with structured backprop.
//!
//! No framework: every layer is a plain struct holding parameter handles
//! into a [`ParamStore`]. Forward passes are pure (`&self`) and return a
//! cache of intermediates; backward passes consume the cache and accumulate
//! into a [`GradStore`]. This keeps the model shareable across threads for
//! batch-parallel training while gradients stay deterministic (per-sample
//! grad stores are reduced in a fixed order).

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};

pub mod layers;

pub use layers::{
    Dropout, EncoderLayer, EncoderLayerCache, FeedForward, LayerNorm, Linear, MultiHeadAttention,
};

/// Handle of one parameter tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// One named parameter tensor. Biases are stored as `1 x k`.
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Array2<f64>,
    /// Updated by the optimizer?
    pub trainable: bool,
    /// Written to checkpoints? Seed-reconstructible buffers skip storage.
    pub persist: bool,
}

/// Flat registry of all parameters of a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>, trainable: bool, persist: bool) -> ParamId {
        assert!(
            self.find(name).is_none(),
            "duplicate parameter name {}",
            name
        );
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            trainable,
            persist,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.entries[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total element count, trainable or not.
    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn trainable_params(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    /// Flip trainability for every parameter whose name starts with `prefix`.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) {
        for e in &mut self.entries {
            if e.name.starts_with(prefix) {
                e.trainable = trainable;
            }
        }
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }
}

/// Gradient accumulator aligned with a [`ParamStore`]. Non-trainable entries
/// get a zero-size placeholder.
#[derive(Debug, Clone)]
pub struct GradStore {
    grads: Vec<Array2<f64>>,
}

impl GradStore {
    pub fn zeros_like(ps: &ParamStore) -> Self {
        let grads = ps
            .entries
            .iter()
            .map(|e| {
                if e.trainable {
                    Array2::zeros(e.value.dim())
                } else {
                    Array2::zeros((0, 0))
                }
            })
            .collect();
        GradStore { grads }
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.grads[id.0]
    }

    /// Accumulate into a trainable slot; no-op for frozen parameters.
    pub fn add(&mut self, id: ParamId, delta: &Array2<f64>) {
        let g = &mut self.grads[id.0];
        if g.is_empty() {
            return;
        }
        *g += delta;
    }

    pub fn add_row(&mut self, id: ParamId, delta: &Array1<f64>) {
        let g = &mut self.grads[id.0];
        if g.is_empty() {
            return;
        }
        let mut row = g.row_mut(0);
        row += delta;
    }

    /// Elementwise sum with another grad store (fixed order keeps training
    /// deterministic under batch parallelism).
    pub fn merge(&mut self, other: &GradStore) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (a, b) in self.grads.iter_mut().zip(other.grads.iter()) {
            if !a.is_empty() {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * s);
        }
    }

    /// True if any stored gradient is non-finite.
    pub fn any_nonfinite(&self) -> bool {
        self.grads
            .iter()
            .any(|g| g.iter().any(|v| !v.is_finite()))
    }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam with bias correction; state allocated only for trainable parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(ps: &ParamStore, lr: f64) -> Self {
        let shape_of = |e: &ParamEntry| {
            if e.trainable {
                Array2::zeros(e.value.dim())
            } else {
                Array2::zeros((0, 0))
            }
        };
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: ps.entries.iter().map(shape_of).collect(),
            v: ps.entries.iter().map(shape_of).collect(),
        }
    }

    /// One update; touches only trainable parameters.
    pub fn step(&mut self, ps: &mut ParamStore, gs: &GradStore) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, e) in ps.entries.iter_mut().enumerate() {
            if !e.trainable {
                continue;
            }
            let g = &gs.grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(&mut e.value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= self.lr * mh / (vh.sqrt() + self.eps);
                });
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient reversal
// ---------------------------------------------------------------------------

/// Gradient Reversal Layer: identity forward, `-lambda * grad` backward.
///
/// Placing it below a classifier head makes everything underneath train
/// against the head's objective in a single backward pass.
#[derive(Debug, Clone, Copy)]
pub struct Grl {
    pub lambda: f64,
}

impl Grl {
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.clone()
    }

    pub fn backward(&self, gy: &Array2<f64>) -> Array2<f64> {
        gy * (-self.lambda)
    }
}

// ---------------------------------------------------------------------------
// Functional pieces
// ---------------------------------------------------------------------------

pub(crate) const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
pub(crate) const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise softmax where only `allowed` columns participate; disallowed
/// columns get probability 0. A row with no allowed column becomes all-zero
/// instead of NaN.
pub fn masked_softmax_rows(scores: &Array2<f64>, allowed: &[bool]) -> Array2<f64> {
    let (n, m) = scores.dim();
    assert_eq!(m, allowed.len());
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..m {
            if allowed[j] {
                max = max.max(scores[[i, j]]);
            }
        }
        if !max.is_finite() {
            continue; // no allowed key
        }
        let mut sum = 0.0;
        for j in 0..m {
            if allowed[j] {
                let e = (scores[[i, j]] - max).exp();
                out[[i, j]] = e;
                sum += e;
            }
        }
        for j in 0..m {
            out[[i, j]] /= sum;
        }
    }
    out
}

/// Backward of row-wise softmax given its output `probs`.
pub fn softmax_backward_rows(probs: &Array2<f64>, gprobs: &Array2<f64>) -> Array2<f64> {
    let (n, m) = probs.dim();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        let mut dot = 0.0;
        for j in 0..m {
            dot += gprobs[[i, j]] * probs[[i, j]];
        }
        for j in 0..m {
            out[[i, j]] = probs[[i, j]] * (gprobs[[i, j]] - dot);
        }
    }
    out
}

/// Mean over the rows flagged valid; `1 x h` output. All-invalid input pools
/// to zeros.
pub fn masked_mean_pool(x: &Array2<f64>, valid: &[bool]) -> Array2<f64> {
    let (n, h) = x.dim();
    assert_eq!(n, valid.len());
    let count = valid.iter().filter(|&&v| v).count();
    let mut out = Array2::zeros((1, h));
    if count == 0 {
        return out;
    }
    for i in 0..n {
        if valid[i] {
            for j in 0..h {
                out[[0, j]] += x[[i, j]];
            }
        }
    }
    out.mapv_inplace(|v| v / count as f64);
    out
}

pub fn masked_mean_pool_backward(gy: &Array2<f64>, valid: &[bool]) -> Array2<f64> {
    let h = gy.dim().1;
    let n = valid.len();
    let count = valid.iter().filter(|&&v| v).count();
    let mut out = Array2::zeros((n, h));
    if count == 0 {
        return out;
    }
    for i in 0..n {
        if valid[i] {
            for j in 0..h {
                out[[i, j]] = gy[[0, j]] / count as f64;
            }
        }
    }
    out
}

/// Numerically stable softmax cross-entropy against an integer target.
/// Returns the loss and the logit gradient (softmax minus one-hot).
pub fn cross_entropy(logits: &Array2<f64>, target: usize) -> (f64, Array2<f64>) {
    let c = logits.dim().1;
    assert_eq!(logits.dim().0, 1);
    assert!(target < c);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    let loss = lse - logits[[0, target]];
    let mut grad = logits.mapv(|l| (l - lse).exp());
    grad[[0, target]] -= 1.0;
    (loss, grad)
}

/// Normal(0, std) initializer, seed-deterministic.
pub fn normal_init(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Array2<f64> {
    let dist = Normal::new(0.0, std).unwrap();
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central finite-difference derivative of `f` with respect to element
/// `(r, c)` of the parameter tensor `id`, used to verify analytic gradients.
pub fn numerical_gradient<F>(
    ps: &mut ParamStore,
    id: ParamId,
    r: usize,
    c: usize,
    h: f64,
    mut f: F,
) -> f64
where
    F: FnMut(&ParamStore) -> f64,
{
    let orig = ps.get(id)[[r, c]];
    ps.get_mut(id)[[r, c]] = orig + h;
    let fp = f(ps);
    ps.get_mut(id)[[r, c]] = orig - h;
    let fm = f(ps);
    ps.get_mut(id)[[r, c]] = orig;
    (fp - fm) / (2.0 * h)
}
