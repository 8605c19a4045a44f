//! Pre-norm transformer blocks over a token matrix `(n_tokens, dim)`.
//!
//! Each block is `x + attn(norm(x))` followed by `x + mlp(norm(x))`.
//! Forward passes return caches that the hand-written backward passes
//! consume; attention probabilities can be captured for inspection.

use std::ops::Range;

use ndarray::{Array2, Axis};
use rand::Rng;

use super::{add_into, silu, silu_prime, Grad, Linear, ParamBuilder, Params};

const LN_EPS: f64 = 1e-5;

/// Per-token layer normalization with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
    pub dim: usize,
}

pub struct LayerNormCache {
    x_hat: Array2<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn layout(builder: &mut ParamBuilder, dim: usize) -> Self {
        Self { gamma: builder.alloc(dim), beta: builder.alloc(dim), dim }
    }

    pub fn init(&self, params: &mut Params) {
        params.fill(&self.gamma, 1.0);
        params.fill(&self.beta, 0.0);
    }

    pub fn forward(&self, params: &Params, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let n = x.nrows();
        let d = self.dim as f64;
        let mut x_hat = Array2::zeros(x.raw_dim());
        let mut inv_std = Vec::with_capacity(n);
        let gamma = params.vec(&self.gamma);
        let beta = params.vec(&self.beta);
        let mut out = Array2::zeros(x.raw_dim());
        for (i, row) in x.rows().into_iter().enumerate() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let istd = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(istd);
            for (j, v) in row.iter().enumerate() {
                let xh = (v - mean) * istd;
                x_hat[[i, j]] = xh;
                out[[i, j]] = xh * gamma[j] + beta[j];
            }
        }
        (out, LayerNormCache { x_hat, inv_std })
    }

    pub fn backward(
        &self,
        params: &Params,
        cache: &LayerNormCache,
        dy: &Array2<f64>,
        grad: &mut Grad,
    ) -> Array2<f64> {
        let d = self.dim as f64;
        let gamma = params.vec(&self.gamma);
        let mut dx = Array2::zeros(dy.raw_dim());
        {
            let ggamma = &mut grad[self.gamma.clone()];
            for (row, xh_row) in dy.rows().into_iter().zip(cache.x_hat.rows()) {
                for (j, (dyv, xh)) in row.iter().zip(xh_row.iter()).enumerate() {
                    ggamma[j] += dyv * xh;
                }
            }
        }
        {
            let gbeta = &mut grad[self.beta.clone()];
            for row in dy.rows() {
                for (j, dyv) in row.iter().enumerate() {
                    gbeta[j] += dyv;
                }
            }
        }
        for i in 0..dy.nrows() {
            let istd = cache.inv_std[i];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..self.dim {
                let dxh = dy[[i, j]] * gamma[j];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * cache.x_hat[[i, j]];
            }
            for j in 0..self.dim {
                let dxh = dy[[i, j]] * gamma[j];
                dx[[i, j]] =
                    istd * (dxh - sum_dxhat / d - cache.x_hat[[i, j]] * sum_dxhat_xhat / d);
            }
        }
        dx
    }
}

/// Multi-head self-attention over one token matrix.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub dim: usize,
    pub heads: usize,
}

pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Row-stochastic attention matrix per head.
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl AttentionCache {
    pub fn probs(&self) -> &[Array2<f64>] {
        &self.probs
    }
}

impl SelfAttention {
    pub fn layout(builder: &mut ParamBuilder, dim: usize, heads: usize) -> Self {
        assert!(dim % heads == 0, "dim must be divisible by heads");
        Self {
            wq: Linear::layout(builder, dim, dim),
            wk: Linear::layout(builder, dim, dim),
            wv: Linear::layout(builder, dim, dim),
            wo: Linear::layout(builder, dim, dim),
            dim,
            heads,
        }
    }

    pub fn init(&self, params: &mut Params, rng: &mut impl Rng) {
        self.wq.init(params, rng);
        self.wk.init(params, rng);
        self.wv.init(params, rng);
        self.wo.init(params, rng);
    }

    pub fn forward(&self, params: &Params, x: &Array2<f64>) -> (Array2<f64>, AttentionCache) {
        let n = x.nrows();
        let hd = self.dim / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let q = self.wq.forward(params, x);
        let k = self.wk.forward(params, x);
        let v = self.wv.forward(params, x);

        let mut concat = Array2::zeros((n, self.dim));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let span = h * hd..(h + 1) * hd;
            let qh = q.slice(ndarray::s![.., span.clone()]);
            let kh = k.slice(ndarray::s![.., span.clone()]);
            let vh = v.slice(ndarray::s![.., span.clone()]);
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|s| s * scale);
            // Row softmax with max-shift for stability.
            for mut row in scores.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for s in row.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                for s in row.iter_mut() {
                    *s /= sum;
                }
            }
            let out_h = scores.dot(&vh);
            concat.slice_mut(ndarray::s![.., span]).assign(&out_h);
            probs.push(scores);
        }
        let y = self.wo.forward(params, &concat);
        let cache = AttentionCache { x: x.clone(), q, k, v, probs, concat };
        (y, cache)
    }

    pub fn backward(
        &self,
        params: &Params,
        cache: &AttentionCache,
        dy: &Array2<f64>,
        grad: &mut Grad,
    ) -> Array2<f64> {
        let hd = self.dim / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let dconcat = self.wo.backward(params, &cache.concat, dy, grad);

        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.heads {
            let span = h * hd..(h + 1) * hd;
            let p = &cache.probs[h];
            let dout_h = dconcat.slice(ndarray::s![.., span.clone()]);
            let vh = cache.v.slice(ndarray::s![.., span.clone()]);
            let qh = cache.q.slice(ndarray::s![.., span.clone()]);
            let kh = cache.k.slice(ndarray::s![.., span.clone()]);

            let dp = dout_h.dot(&vh.t());
            dv.slice_mut(ndarray::s![.., span.clone()])
                .assign(&p.t().dot(&dout_h));

            // Softmax backward per row: ds = p * (dp - sum(dp * p)).
            let mut ds = Array2::zeros(dp.raw_dim());
            for i in 0..dp.nrows() {
                let dot: f64 = dp.row(i).iter().zip(p.row(i).iter()).map(|(a, b)| a * b).sum();
                for j in 0..dp.ncols() {
                    ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot);
                }
            }
            ds.mapv_inplace(|v| v * scale);
            dq.slice_mut(ndarray::s![.., span.clone()]).assign(&ds.dot(&kh));
            dk.slice_mut(ndarray::s![.., span]).assign(&ds.t().dot(&qh));
        }

        let mut dx = self.wq.backward(params, &cache.x, &dq, grad);
        dx += &self.wk.backward(params, &cache.x, &dk, grad);
        dx += &self.wv.backward(params, &cache.x, &dv, grad);
        dx
    }
}

/// One pre-norm transformer block: attention and a two-layer feed-forward
/// network, both with residual connections.
#[derive(Debug, Clone)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: SelfAttention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

pub struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    x_mid: Array2<f64>,
    ln2: LayerNormCache,
    ln2_out: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

impl BlockCache {
    pub fn attention_probs(&self) -> &[Array2<f64>] {
        self.attn.probs()
    }
}

impl Block {
    pub fn layout(builder: &mut ParamBuilder, dim: usize, heads: usize, hidden: usize) -> Self {
        Self {
            ln1: LayerNorm::layout(builder, dim),
            attn: SelfAttention::layout(builder, dim, heads),
            ln2: LayerNorm::layout(builder, dim),
            fc1: Linear::layout(builder, dim, hidden),
            fc2: Linear::layout(builder, hidden, dim),
        }
    }

    pub fn init(&self, params: &mut Params, rng: &mut impl Rng) {
        self.ln1.init(params);
        self.attn.init(params, rng);
        self.ln2.init(params);
        self.fc1.init(params, rng);
        self.fc2.init(params, rng);
    }

    pub fn forward(&self, params: &Params, x: &Array2<f64>) -> (Array2<f64>, BlockCache) {
        let (normed, ln1) = self.ln1.forward(params, x);
        let (attn_out, attn) = self.attn.forward(params, &normed);
        let x_mid = x + &attn_out;
        let (ln2_out, ln2) = self.ln2.forward(params, &x_mid);
        let pre_act = self.fc1.forward(params, &ln2_out);
        let act = pre_act.mapv(silu);
        let mlp_out = self.fc2.forward(params, &act);
        let out = &x_mid + &mlp_out;
        (out, BlockCache { ln1, attn, x_mid, ln2, ln2_out, pre_act, act })
    }

    pub fn backward(
        &self,
        params: &Params,
        cache: &BlockCache,
        dy: &Array2<f64>,
        grad: &mut Grad,
    ) -> Array2<f64> {
        let dact = self.fc2.backward(params, &cache.act, dy, grad);
        let dpre = &dact * &cache.pre_act.mapv(silu_prime);
        let dln2_out = self.fc1.backward(params, &cache.ln2_out, &dpre, grad);
        let mut dx_mid = self.ln2.backward(params, &cache.ln2, &dln2_out, grad);
        dx_mid += dy;

        let dnormed = self.attn.backward(params, &cache.attn, &dx_mid, grad);
        let mut dx = self.ln1.backward(params, &cache.ln1, &dnormed, grad);
        dx += &dx_mid;
        dx
    }
}

/// A stack of blocks applied in sequence.
#[derive(Debug, Clone)]
pub struct Stack {
    pub blocks: Vec<Block>,
}

impl Stack {
    pub fn layout(builder: &mut ParamBuilder, layers: usize, dim: usize, heads: usize, hidden: usize) -> Self {
        Self {
            blocks: (0..layers).map(|_| Block::layout(builder, dim, heads, hidden)).collect(),
        }
    }

    pub fn init(&self, params: &mut Params, rng: &mut impl Rng) {
        for b in &self.blocks {
            b.init(params, rng);
        }
    }

    pub fn forward(&self, params: &Params, x: &Array2<f64>) -> (Array2<f64>, Vec<BlockCache>) {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut cur = x.clone();
        for b in &self.blocks {
            let (next, cache) = b.forward(params, &cur);
            caches.push(cache);
            cur = next;
        }
        (cur, caches)
    }

    pub fn backward(
        &self,
        params: &Params,
        caches: &[BlockCache],
        dy: &Array2<f64>,
        grad: &mut Grad,
    ) -> Array2<f64> {
        let mut d = dy.clone();
        for (b, cache) in self.blocks.iter().zip(caches.iter()).rev() {
            d = b.backward(params, cache, &d, grad);
        }
        d
    }
}

/// Mean over tokens of the squared difference, used by tests.
pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = a - b;
    diff.mapv(|v| v * v).mean_axis(Axis(0)).unwrap().sum() / a.ncols() as f64
}
