//! Layers: linear, layer norm, dropout, multi-head attention, feed-forward,
//! and the post-norm encoder block they compose into.
//!
//! Every layer follows the same shape: `forward(&self, ps, ...) -> (out,
//! Cache)` and `backward(&self, ps, cache, gy, gs) -> gx`. Caches hold the
//! intermediates the backward pass needs, so one layer can serve several
//! forward passes per step (the pretraining loss runs the trunk three times).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    gelu, gelu_grad, masked_softmax_rows, normal_init, softmax_backward_rows, GradStore, ParamId,
    ParamStore,
};

pub(crate) const INIT_STD: f64 = 0.02;
const LN_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

/// Affine map `y = x W + b` with `W: din x dout`, `b: 1 x dout`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        din: usize,
        dout: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = ps.add(
            &format!("{}.w", name),
            normal_init(din, dout, INIT_STD, rng),
            true,
            true,
        );
        let b = ps.add(&format!("{}.b", name), Array2::zeros((1, dout)), true, true);
        Linear { w, b }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        x.dot(ps.get(self.w)) + ps.get(self.b)
    }

    /// Accumulates parameter grads and returns the input grad. `x` is the
    /// forward input.
    pub fn backward(
        &self,
        ps: &ParamStore,
        x: &Array2<f64>,
        gy: &Array2<f64>,
        gs: &mut GradStore,
    ) -> Array2<f64> {
        gs.add(self.w, &x.t().dot(gy));
        gs.add_row(self.b, &gy.sum_axis(Axis(0)));
        gy.dot(&ps.get(self.w).t())
    }
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

/// Per-row normalization over the feature axis with learned scale/shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = ps.add(&format!("{}.gamma", name), Array2::ones((1, dim)), true, true);
        let beta = ps.add(&format!("{}.beta", name), Array2::zeros((1, dim)), true, true);
        LayerNorm { gamma, beta }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let (n, h) = x.dim();
        let mut xhat = Array2::zeros((n, h));
        let mut inv_std = Array1::zeros(n);
        for i in 0..n {
            let row = x.row(i);
            let mean = row.sum() / h as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let istd = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = istd;
            for j in 0..h {
                xhat[[i, j]] = (x[[i, j]] - mean) * istd;
            }
        }
        let out = &xhat * ps.get(self.gamma) + ps.get(self.beta);
        (out, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &LayerNormCache,
        gy: &Array2<f64>,
        gs: &mut GradStore,
    ) -> Array2<f64> {
        let (n, h) = gy.dim();
        gs.add(self.gamma, &(gy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
        gs.add_row(self.beta, &gy.sum_axis(Axis(0)));
        let gamma = ps.get(self.gamma);
        let mut gx = Array2::zeros((n, h));
        for i in 0..n {
            let mut mean_g = 0.0;
            let mut mean_gx = 0.0;
            for j in 0..h {
                let gxh = gy[[i, j]] * gamma[[0, j]];
                mean_g += gxh;
                mean_gx += gxh * cache.xhat[[i, j]];
            }
            mean_g /= h as f64;
            mean_gx /= h as f64;
            for j in 0..h {
                let gxh = gy[[i, j]] * gamma[[0, j]];
                gx[[i, j]] = cache.inv_std[i] * (gxh - mean_g - cache.xhat[[i, j]] * mean_gx);
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout; eval mode is the identity and produces no cache.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub p: f64,
}

pub type DropoutCache = Option<Array2<f64>>; // scale mask, None in eval mode

impl Dropout {
    pub fn forward(
        &self,
        x: &Array2<f64>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, DropoutCache) {
        match rng {
            Some(rng) if self.p > 0.0 => {
                let keep = 1.0 - self.p;
                let mask = Array2::from_shape_fn(x.dim(), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (x * &mask, Some(mask))
            }
            _ => (x.clone(), None),
        }
    }

    pub fn backward(&self, cache: &DropoutCache, gy: &Array2<f64>) -> Array2<f64> {
        match cache {
            Some(mask) => gy * mask,
            None => gy.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Multi-head attention
// ---------------------------------------------------------------------------

/// Standard multi-head self-attention over `n x h` states. Pad slots are
/// excluded as keys via the attend-allowed vector; all queries are computed.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dropout: Dropout,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Pre-dropout attention probabilities, one `n x n` matrix per head.
    probs: Vec<Array2<f64>>,
    drop: Vec<DropoutCache>,
    ctx: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        hidden: usize,
        heads: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(hidden % heads == 0, "hidden must divide evenly into heads");
        MultiHeadAttention {
            wq: Linear::new(ps, &format!("{}.q", name), hidden, hidden, rng),
            wk: Linear::new(ps, &format!("{}.k", name), hidden, hidden, rng),
            wv: Linear::new(ps, &format!("{}.v", name), hidden, hidden, rng),
            wo: Linear::new(ps, &format!("{}.o", name), hidden, hidden, rng),
            heads,
            dropout: Dropout { p: dropout },
        }
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &Array2<f64>,
        key_allowed: &[bool],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, AttentionCache) {
        let (n, h) = x.dim();
        let dh = h / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.wq.forward(ps, x);
        let k = self.wk.forward(ps, x);
        let v = self.wv.forward(ps, x);
        let mut ctx = Array2::zeros((n, h));
        let mut probs = Vec::with_capacity(self.heads);
        let mut drop = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let cols = head * dh..(head + 1) * dh;
            let qi = q.slice(ndarray::s![.., cols.clone()]);
            let ki = k.slice(ndarray::s![.., cols.clone()]);
            let vi = v.slice(ndarray::s![.., cols.clone()]);
            let scores = qi.dot(&ki.t()) * scale;
            let p = masked_softmax_rows(&scores, key_allowed);
            let (pd, dmask) = self.dropout.forward(&p, rng.as_deref_mut());
            let c = pd.dot(&vi);
            ctx.slice_mut(ndarray::s![.., cols]).assign(&c);
            probs.push(p);
            drop.push(dmask);
        }
        let out = self.wo.forward(ps, &ctx);
        (
            out,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                drop,
                ctx,
            },
        )
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &AttentionCache,
        gy: &Array2<f64>,
        gs: &mut GradStore,
    ) -> Array2<f64> {
        let (n, h) = cache.x.dim();
        let dh = h / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let gctx = self.wo.backward(ps, &cache.ctx, gy, gs);
        let mut gq = Array2::zeros((n, h));
        let mut gk = Array2::zeros((n, h));
        let mut gv = Array2::zeros((n, h));
        for head in 0..self.heads {
            let cols = head * dh..(head + 1) * dh;
            let gctx_i = gctx.slice(ndarray::s![.., cols.clone()]);
            let vi = cache.v.slice(ndarray::s![.., cols.clone()]);
            let qi = cache.q.slice(ndarray::s![.., cols.clone()]);
            let ki = cache.k.slice(ndarray::s![.., cols.clone()]);
            let p = &cache.probs[head];
            // ctx_i = dropout(p) . v_i
            let pd_grad = gctx_i.dot(&vi.t());
            let pd = match &cache.drop[head] {
                Some(mask) => p * mask,
                None => p.clone(),
            };
            gv.slice_mut(ndarray::s![.., cols.clone()])
                .assign(&pd.t().dot(&gctx_i));
            let gp = self.dropout.backward(&cache.drop[head], &pd_grad);
            let gscores = softmax_backward_rows(p, &gp) * scale;
            gq.slice_mut(ndarray::s![.., cols.clone()])
                .assign(&gscores.dot(&ki));
            gk.slice_mut(ndarray::s![.., cols])
                .assign(&gscores.t().dot(&qi));
        }
        let gx_q = self.wq.backward(ps, &cache.x, &gq, gs);
        let gx_k = self.wk.backward(ps, &cache.x, &gk, gs);
        let gx_v = self.wv.backward(ps, &cache.x, &gv, gs);
        gx_q + gx_k + gx_v
    }
}

// ---------------------------------------------------------------------------
// Feed-forward
// ---------------------------------------------------------------------------

/// Two-layer position-wise feed-forward with GELU.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    x: Array2<f64>,
    pre_act: Array2<f64>,
    hidden: Array2<f64>,
}

impl FeedForward {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        hidden: usize,
        inner: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        FeedForward {
            lin1: Linear::new(ps, &format!("{}.lin1", name), hidden, inner, rng),
            lin2: Linear::new(ps, &format!("{}.lin2", name), inner, hidden, rng),
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre_act = self.lin1.forward(ps, x);
        let hidden = pre_act.mapv(gelu);
        let out = self.lin2.forward(ps, &hidden);
        (
            out,
            FeedForwardCache {
                x: x.clone(),
                pre_act,
                hidden,
            },
        )
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &FeedForwardCache,
        gy: &Array2<f64>,
        gs: &mut GradStore,
    ) -> Array2<f64> {
        let ghidden = self.lin2.backward(ps, &cache.hidden, gy, gs);
        let gpre = &ghidden * &cache.pre_act.mapv(gelu_grad);
        self.lin1.backward(ps, &cache.x, &gpre, gs)
    }
}

// ---------------------------------------------------------------------------
// Encoder layer (post-norm)
// ---------------------------------------------------------------------------

/// One transformer encoder block:
/// `x -> LN1(x + Drop(MHA(x))) -> LN2(. + Drop(FFN(.)))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ffn: FeedForward,
    pub ln2: LayerNorm,
    pub dropout: Dropout,
}

#[derive(Debug, Clone)]
pub struct EncoderLayerCache {
    attn: AttentionCache,
    drop1: DropoutCache,
    ln1: LayerNormCache,
    ffn: FeedForwardCache,
    drop2: DropoutCache,
    ln2: LayerNormCache,
}

impl EncoderLayer {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        hidden: usize,
        inner: usize,
        heads: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        EncoderLayer {
            attn: MultiHeadAttention::new(ps, &format!("{}.attn", name), hidden, heads, dropout, rng),
            ln1: LayerNorm::new(ps, &format!("{}.ln1", name), hidden),
            ffn: FeedForward::new(ps, &format!("{}.ffn", name), hidden, inner, rng),
            ln2: LayerNorm::new(ps, &format!("{}.ln2", name), hidden),
            dropout: Dropout { p: dropout },
        }
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &Array2<f64>,
        key_allowed: &[bool],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, EncoderLayerCache) {
        let (a, attn_cache) = self.attn.forward(ps, x, key_allowed, rng.as_deref_mut());
        let (a_d, drop1) = self.dropout.forward(&a, rng.as_deref_mut());
        let (h1, ln1_cache) = self.ln1.forward(ps, &(x + &a_d));
        let (f, ffn_cache) = self.ffn.forward(ps, &h1);
        let (f_d, drop2) = self.dropout.forward(&f, rng.as_deref_mut());
        let (out, ln2_cache) = self.ln2.forward(ps, &(&h1 + &f_d));
        (
            out,
            EncoderLayerCache {
                attn: attn_cache,
                drop1,
                ln1: ln1_cache,
                ffn: ffn_cache,
                drop2,
                ln2: ln2_cache,
            },
        )
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &EncoderLayerCache,
        gy: &Array2<f64>,
        gs: &mut GradStore,
    ) -> Array2<f64> {
        let g_r2 = self.ln2.backward(ps, &cache.ln2, gy, gs);
        let g_f = self.dropout.backward(&cache.drop2, &g_r2);
        let g_h1 = &g_r2 + &self.ffn.backward(ps, &cache.ffn, &g_f, gs);
        let g_r1 = self.ln1.backward(ps, &cache.ln1, &g_h1, gs);
        let g_a = self.dropout.backward(&cache.drop1, &g_r1);
        &g_r1 + &self.attn.backward(ps, &cache.attn, &g_a, gs)
    }
}
