//! Pre-layer-norm transformer cross-encoder with a pooled scalar score head.
//!
//! Learned absolute positions, two segment embeddings, tanh-approximated
//! GELU feed-forward blocks and a final layer norm. The score is the dot
//! product of a learned vector with the final hidden state at position 0.
//! Forward and backward passes are written out by hand in `f64`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::AttentionPattern;
use crate::error::{Error, Result};
use crate::params::Parameters;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// d=64, 4 heads, 2 layers.
    pub fn desk(vocab_size: usize, max_positions: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            max_positions,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.max_positions == 0 {
            return bad("encoder dimensions must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if self.vocab_size < super::tokenizer::SPECIAL_TOKENS.len() {
            return bad("vocabulary smaller than the special-token set");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// One encoder input: token ids, segment ids (0 or 1) and the attention
/// pattern to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub ids: Vec<usize>,
    pub segments: Vec<usize>,
    pub pattern: AttentionPattern,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub token_emb: Array2<f64>,
    pub position_emb: Array2<f64>,
    pub segment_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    /// Score vector applied to the pooled state.
    pub w_score: Array1<f64>,
}

fn uniform2(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

fn uniform1(rng: &mut impl Rng, n: usize, bound: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.gen_range(-bound..bound))
}

impl EncoderParams {
    /// Uniform initialization scaled by `1/sqrt(fan_in)`; layer-norm gains
    /// one, biases zero.
    pub fn init(config: EncoderConfig, rng: &mut impl Rng) -> Self {
        let d = config.d_model;
        let f = config.d_ff;
        let bd = 1.0 / (d as f64).sqrt();
        let bf = 1.0 / (f as f64).sqrt();
        let token_emb = uniform2(rng, config.vocab_size, d, bd);
        let position_emb = uniform2(rng, config.max_positions, d, bd);
        let segment_emb = uniform2(rng, 2, d, bd);
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                wq: uniform2(rng, d, d, bd),
                bq: Array1::zeros(d),
                wk: uniform2(rng, d, d, bd),
                bk: Array1::zeros(d),
                wv: uniform2(rng, d, d, bd),
                bv: Array1::zeros(d),
                wo: uniform2(rng, d, d, bd),
                bo: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                w_ff1: uniform2(rng, d, f, bd),
                b_ff1: Array1::zeros(f),
                w_ff2: uniform2(rng, f, d, bf),
                b_ff2: Array1::zeros(d),
            })
            .collect();
        Self {
            config,
            token_emb,
            position_emb,
            segment_emb,
            layers,
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
            w_score: uniform1(rng, d, bd),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

fn slice_of1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice_of2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

impl Parameters for EncoderParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("token_emb", slice_of2(&self.token_emb));
        f("position_emb", slice_of2(&self.position_emb));
        f("segment_emb", slice_of2(&self.segment_emb));
        for (i, l) in self.layers.iter().enumerate() {
            let n = |s: &str| format!("layers.{i}.{s}");
            f(&n("ln1_g"), slice_of1(&l.ln1_g));
            f(&n("ln1_b"), slice_of1(&l.ln1_b));
            f(&n("wq"), slice_of2(&l.wq));
            f(&n("bq"), slice_of1(&l.bq));
            f(&n("wk"), slice_of2(&l.wk));
            f(&n("bk"), slice_of1(&l.bk));
            f(&n("wv"), slice_of2(&l.wv));
            f(&n("bv"), slice_of1(&l.bv));
            f(&n("wo"), slice_of2(&l.wo));
            f(&n("bo"), slice_of1(&l.bo));
            f(&n("ln2_g"), slice_of1(&l.ln2_g));
            f(&n("ln2_b"), slice_of1(&l.ln2_b));
            f(&n("w_ff1"), slice_of2(&l.w_ff1));
            f(&n("b_ff1"), slice_of1(&l.b_ff1));
            f(&n("w_ff2"), slice_of2(&l.w_ff2));
            f(&n("b_ff2"), slice_of1(&l.b_ff2));
        }
        f("lnf_g", slice_of1(&self.lnf_g));
        f("lnf_b", slice_of1(&self.lnf_b));
        f("w_score", slice_of1(&self.w_score));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        fn m1(a: &mut Array1<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        fn m2(a: &mut Array2<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        f("token_emb", m2(&mut self.token_emb));
        f("position_emb", m2(&mut self.position_emb));
        f("segment_emb", m2(&mut self.segment_emb));
        for (i, l) in self.layers.iter_mut().enumerate() {
            let n = |s: &str| format!("layers.{i}.{s}");
            f(&n("ln1_g"), m1(&mut l.ln1_g));
            f(&n("ln1_b"), m1(&mut l.ln1_b));
            f(&n("wq"), m2(&mut l.wq));
            f(&n("bq"), m1(&mut l.bq));
            f(&n("wk"), m2(&mut l.wk));
            f(&n("bk"), m1(&mut l.bk));
            f(&n("wv"), m2(&mut l.wv));
            f(&n("bv"), m1(&mut l.bv));
            f(&n("wo"), m2(&mut l.wo));
            f(&n("bo"), m1(&mut l.bo));
            f(&n("ln2_g"), m1(&mut l.ln2_g));
            f(&n("ln2_b"), m1(&mut l.ln2_b));
            f(&n("w_ff1"), m2(&mut l.w_ff1));
            f(&n("b_ff1"), m1(&mut l.b_ff1));
            f(&n("w_ff2"), m2(&mut l.w_ff2));
            f(&n("b_ff2"), m1(&mut l.b_ff2));
        }
        f("lnf_g", m1(&mut self.lnf_g));
        f("lnf_b", m1(&mut self.lnf_b));
        f("w_score", m1(&mut self.w_score));
    }
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_keep: Option<Array2<f64>>,
    ln2: LnCache,
    h2: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

/// Intermediate values of one forward pass, consumed by `backward`.
pub struct ForwardCache {
    emb_keep: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pooled: Array1<f64>,
}

impl ForwardCache {
    pub fn pooled(&self) -> &Array1<f64> {
        &self.pooled
    }

    /// Attention probabilities, indexed `[layer][head]`, each `n x n`.
    pub fn attention(&self) -> Vec<Vec<Array2<f64>>> {
        self.layers.iter().map(|l| l.probs.clone()).collect()
    }
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let n = x.nrows();
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(n);
    for (mut row, r) in xhat.axis_iter_mut(Axis(0)).zip(rstd.iter_mut()) {
        let mean = row.mean().unwrap_or(0.0);
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| v * rs);
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let dxhat = dy * g;
    let d = dxhat.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, dxh), xh), &r) in dx
        .axis_iter_mut(Axis(0))
        .zip(dxhat.axis_iter(Axis(0)))
        .zip(cache.xhat.axis_iter(Axis(0)))
        .zip(cache.rstd.iter())
    {
        let mean_d = dxh.sum() / d;
        let mean_dx = dxh.dot(&xh) / d;
        Zip::from(&mut out)
            .and(&dxh)
            .and(&xh)
            .for_each(|o, &a, &x| *o = r * (a - mean_d - x * mean_dx));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn dropout_mask(rng: &mut impl Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn(shape, |_| if rng.gen::<f64>() < p { 0.0 } else { keep })
}

fn add_rows(m: &mut Array2<f64>, v: &Array1<f64>) {
    *m += v;
}

fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    a.dot(b)
}

fn matmul_tn(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    a.t().dot(&b)
}

impl EncoderParams {
    fn check(&self, seq: &Sequence) {
        assert_eq!(seq.ids.len(), seq.segments.len(), "ids/segments length mismatch");
        assert!(!seq.ids.is_empty(), "empty sequence");
        assert!(
            seq.ids.len() <= self.config.max_positions,
            "sequence of {} tokens exceeds {} positions",
            seq.ids.len(),
            self.config.max_positions
        );
    }

    /// Score without keeping intermediates; dropout off.
    pub fn score(&self, seq: &Sequence) -> f64 {
        self.forward(seq, None::<&mut rand_chacha::ChaCha8Rng>).0
    }

    /// Forward pass. Dropout is active only when `rng` is given.
    pub fn forward<R: Rng>(&self, seq: &Sequence, mut rng: Option<&mut R>) -> (f64, ForwardCache) {
        self.check(seq);
        let cfg = &self.config;
        let n = seq.len();
        let d = cfg.d_model;
        let heads = cfg.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let p = cfg.dropout;

        let mut x = Array2::zeros((n, d));
        for (t, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
            row += &self.token_emb.row(seq.ids[t]);
            row += &self.position_emb.row(t);
            row += &self.segment_emb.row(seq.segments[t]);
        }
        let emb_keep = match (rng.as_deref_mut(), p > 0.0) {
            (Some(r), true) => {
                let m = dropout_mask(r, (n, d), p);
                x *= &m;
                Some(m)
            }
            _ => None,
        };

        let mut layers = Vec::with_capacity(self.layers.len());
        for lp in &self.layers {
            let (h1, ln1) = layer_norm(&x, &lp.ln1_g, &lp.ln1_b);
            let mut q = matmul(&h1, &lp.wq);
            add_rows(&mut q, &lp.bq);
            let mut k = matmul(&h1, &lp.wk);
            add_rows(&mut k, &lp.bk);
            let mut v = matmul(&h1, &lp.wv);
            add_rows(&mut v, &lp.bv);
            let mut ctx = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t());
                scores *= scale;
                seq.pattern.mask_scores(&mut scores);
                softmax_rows(&mut scores);
                ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            let mut attn_out = matmul(&ctx, &lp.wo);
            add_rows(&mut attn_out, &lp.bo);
            let attn_keep = match (rng.as_deref_mut(), p > 0.0) {
                (Some(r), true) => {
                    let m = dropout_mask(r, (n, d), p);
                    attn_out *= &m;
                    Some(m)
                }
                _ => None,
            };
            x += &attn_out;

            let (h2, ln2) = layer_norm(&x, &lp.ln2_g, &lp.ln2_b);
            let mut u = matmul(&h2, &lp.w_ff1);
            add_rows(&mut u, &lp.b_ff1);
            let g = u.mapv(gelu);
            let mut ff = matmul(&g, &lp.w_ff2);
            add_rows(&mut ff, &lp.b_ff2);
            x += &ff;

            layers.push(LayerCache {
                ln1,
                h1,
                q,
                k,
                v,
                probs,
                ctx,
                attn_keep,
                ln2,
                h2,
                u,
                g,
            });
        }
        let (y, lnf) = layer_norm(&x, &self.lnf_g, &self.lnf_b);
        let pooled = y.row(0).to_owned();
        let score = self.w_score.dot(&pooled);
        (
            score,
            ForwardCache {
                emb_keep,
                layers,
                lnf,
                pooled,
            },
        )
    }

    /// Accumulates `dscore * d(score)/d(params)` into `grads`.
    pub fn backward(&self, seq: &Sequence, cache: &ForwardCache, dscore: f64, grads: &mut EncoderParams) {
        let cfg = &self.config;
        let n = seq.len();
        let d = cfg.d_model;
        let heads = cfg.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        grads.w_score.scaled_add(dscore, &cache.pooled);
        let mut dy = Array2::zeros((n, d));
        dy.row_mut(0).scaled_add(dscore, &self.w_score);
        let mut dx = layer_norm_backward(&dy, &cache.lnf, &self.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);

        for ((lp, lc), lg) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            // feed-forward block
            lg.w_ff2 += &matmul_tn(lc.g.view(), dx.view());
            lg.b_ff2 += &dx.sum_axis(Axis(0));
            let mut du = dx.dot(&lp.w_ff2.t());
            Zip::from(&mut du).and(&lc.u).for_each(|a, &u| *a *= gelu_grad(u));
            lg.w_ff1 += &matmul_tn(lc.h2.view(), du.view());
            lg.b_ff1 += &du.sum_axis(Axis(0));
            let dh2 = du.dot(&lp.w_ff1.t());
            dx += &layer_norm_backward(&dh2, &lc.ln2, &lp.ln2_g, &mut lg.ln2_g, &mut lg.ln2_b);

            // attention block
            let mut dattn = dx.clone();
            if let Some(m) = &lc.attn_keep {
                dattn *= m;
            }
            lg.wo += &matmul_tn(lc.ctx.view(), dattn.view());
            lg.bo += &dattn.sum_axis(Axis(0));
            let dctx = dattn.dot(&lp.wo.t());
            let mut dq = Array2::zeros((n, d));
            let mut dk = Array2::zeros((n, d));
            let mut dv = Array2::zeros((n, d));
            for (h, a) in lc.probs.iter().enumerate() {
                let cols = s![.., h * dh..(h + 1) * dh];
                let d_out = dctx.slice(cols);
                let da = d_out.dot(&lc.v.slice(cols).t());
                dv.slice_mut(cols).assign(&a.t().dot(&d_out));
                let mut ds = &da * a;
                let row_dot = ds.sum_axis(Axis(1));
                Zip::from(ds.rows_mut())
                    .and(a.rows())
                    .and(&row_dot)
                    .for_each(|mut dsr, ar, &rd| {
                        dsr.zip_mut_with(&ar, |x, &p| *x -= p * rd);
                    });
                ds *= scale;
                dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
            }
            lg.wq += &matmul_tn(lc.h1.view(), dq.view());
            lg.bq += &dq.sum_axis(Axis(0));
            lg.wk += &matmul_tn(lc.h1.view(), dk.view());
            lg.bk += &dk.sum_axis(Axis(0));
            lg.wv += &matmul_tn(lc.h1.view(), dv.view());
            lg.bv += &dv.sum_axis(Axis(0));
            let mut dh1 = dq.dot(&lp.wq.t());
            dh1 += &dk.dot(&lp.wk.t());
            dh1 += &dv.dot(&lp.wv.t());
            dx += &layer_norm_backward(&dh1, &lc.ln1, &lp.ln1_g, &mut lg.ln1_g, &mut lg.ln1_b);
        }

        if let Some(m) = &cache.emb_keep {
            dx *= m;
        }
        for (t, row) in dx.axis_iter(Axis(0)).enumerate() {
            let mut tok = grads.token_emb.row_mut(seq.ids[t]);
            tok += &row;
            let mut pos = grads.position_emb.row_mut(t);
            pos += &row;
            let mut seg = grads.segment_emb.row_mut(seq.segments[t]);
            seg += &row;
        }
    }
}
