use alloc::vec;
use alloc::vec::Vec;

use super::{Batch, LayerParams, ModelConfig, ParamSet, SequenceView, Variant};
use crate::numerics::{dot, gelu_scalar, gemm_nn, masked_softmax_in_place, normalize_row, Matrix};
use crate::{Error, Result};

/// Output of a batched forward pass; rows are `sequence * seq_len + position`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    /// Final hidden states feeding the head (after the final LayerNorm for
    /// the decoder).
    pub hidden: Matrix,
    pub logits: Matrix,
}

/// Intermediates of one layer needed by the backward pass.
#[derive(Clone, Debug, Default)]
pub(crate) struct LayerCache {
    pub attn_in: Vec<f32>,
    pub ln1_xhat: Vec<f32>,
    pub ln1_inv: Vec<f32>,
    pub q: Vec<f32>,
    pub k: Vec<f32>,
    pub v: Vec<f32>,
    /// `heads × T × T`
    pub probs: Vec<f32>,
    pub ctx: Vec<f32>,
    pub ffn_in: Vec<f32>,
    pub ln2_xhat: Vec<f32>,
    pub ln2_inv: Vec<f32>,
    pub z: Vec<f32>,
    pub act: Vec<f32>,
}

#[derive(Clone, Debug)]
pub(crate) struct SequenceCache {
    pub len: usize,
    pub norm_xhat: Vec<f32>,
    pub norm_inv: Vec<f32>,
    pub layers: Vec<LayerCache>,
    pub head_in: Vec<f32>,
    pub logits: Vec<f32>,
}

/// Full-depth forward over a batch.
pub fn forward(config: &ModelConfig, params: &ParamSet, batch: &Batch) -> Result<ForwardOutput> {
    forward_depth(config, params, batch, config.layers)
}

/// Forward through the bottom `depth` layers only, then the head. `depth = 0`
/// is the embedding-plus-head model.
pub fn forward_depth(
    config: &ModelConfig,
    params: &ParamSet,
    batch: &Batch,
    depth: usize,
) -> Result<ForwardOutput> {
    check_inputs(config, params, batch, depth)?;
    let rows = batch.batch_size * batch.seq_len;
    let mut hidden = Matrix::zeros(rows, config.hidden);
    let mut logits = Matrix::zeros(rows, config.vocab);
    for b in 0..batch.batch_size {
        let cache = sequence_forward(config, params, batch.sequence(b), depth);
        let r0 = b * batch.seq_len;
        hidden.as_mut_slice()[r0 * config.hidden..(r0 + batch.seq_len) * config.hidden]
            .copy_from_slice(&cache.head_in);
        logits.as_mut_slice()[r0 * config.vocab..(r0 + batch.seq_len) * config.vocab]
            .copy_from_slice(&cache.logits);
    }
    Ok(ForwardOutput { hidden, logits })
}

/// Checks that `params` and `batch` fit `config` and that `depth` is in range.
pub fn check_inputs(config: &ModelConfig, params: &ParamSet, batch: &Batch, depth: usize) -> Result<()> {
    config.validate()?;
    if params.layers.len() != config.layers
        || params.tok_emb.shape() != (config.vocab, config.hidden)
        || params.head.shape() != (config.hidden, config.vocab)
        || params.pos_emb.shape() != (config.max_seq, config.hidden)
    {
        return Err(Error::InvalidConfig("parameters do not match config".into()));
    }
    if depth > config.layers {
        return Err(Error::InvalidConfig(alloc::format!(
            "depth {depth} exceeds {} layers",
            config.layers
        )));
    }
    batch.validate(config)
}

pub(crate) fn sequence_forward(
    config: &ModelConfig,
    params: &ParamSet,
    seq: SequenceView<'_>,
    depth: usize,
) -> SequenceCache {
    let t = seq.ids.len();
    let d = config.hidden;
    let mut h = vec![0.0f32; t * d];
    for (p, &id) in seq.ids.iter().enumerate() {
        let tok = params.tok_emb.row(id as usize);
        let pos = params.pos_emb.row(p);
        for ((o, &a), &b) in h[p * d..(p + 1) * d].iter_mut().zip(tok).zip(pos) {
            *o = a + b;
        }
    }

    let mut norm_xhat = Vec::new();
    let mut norm_inv = Vec::new();
    if config.variant == Variant::PostLnEncoder {
        let (out, xhat, inv) = layer_norm_rows(&h, t, &params.norm.gain, &params.norm.bias, config.ln_eps);
        h = out;
        norm_xhat = xhat;
        norm_inv = inv;
    }

    let mut layers = Vec::with_capacity(depth);
    for layer in &params.layers[..depth] {
        let (out, cache) = layer_forward(config, layer, &h, seq.attention);
        layers.push(cache);
        h = out;
    }

    if config.variant == Variant::PreLnDecoder {
        let (out, xhat, inv) = layer_norm_rows(&h, t, &params.norm.gain, &params.norm.bias, config.ln_eps);
        h = out;
        norm_xhat = xhat;
        norm_inv = inv;
    }

    let logits = linear(&h, t, &params.head, &params.head_bias);
    SequenceCache {
        len: t,
        norm_xhat,
        norm_inv,
        layers,
        head_in: h,
        logits,
    }
}

fn layer_forward(config: &ModelConfig, p: &LayerParams, h: &[f32], attention: &[bool]) -> (Vec<f32>, LayerCache) {
    let t = attention.len();
    let eps = config.ln_eps;
    let mut c = LayerCache::default();
    match config.variant {
        Variant::PostLnEncoder => {
            c.attn_in = h.to_vec();
            let a = attention_block(config, p, &mut c, attention);
            let r1: Vec<f32> = h.iter().zip(&a).map(|(x, y)| x + y).collect();
            let (h1, xhat1, inv1) = layer_norm_rows(&r1, t, &p.ln1.gain, &p.ln1.bias, eps);
            c.ln1_xhat = xhat1;
            c.ln1_inv = inv1;
            c.ffn_in = h1;
            let o = ffn_block(config, p, &mut c);
            let r2: Vec<f32> = c.ffn_in.iter().zip(&o).map(|(x, y)| x + y).collect();
            let (out, xhat2, inv2) = layer_norm_rows(&r2, t, &p.ln2.gain, &p.ln2.bias, eps);
            c.ln2_xhat = xhat2;
            c.ln2_inv = inv2;
            (out, c)
        }
        Variant::PreLnDecoder => {
            let (n1, xhat1, inv1) = layer_norm_rows(h, t, &p.ln1.gain, &p.ln1.bias, eps);
            c.attn_in = n1;
            c.ln1_xhat = xhat1;
            c.ln1_inv = inv1;
            let a = attention_block(config, p, &mut c, attention);
            let h1: Vec<f32> = h.iter().zip(&a).map(|(x, y)| x + y).collect();
            let (n2, xhat2, inv2) = layer_norm_rows(&h1, t, &p.ln2.gain, &p.ln2.bias, eps);
            c.ffn_in = n2;
            c.ln2_xhat = xhat2;
            c.ln2_inv = inv2;
            let o = ffn_block(config, p, &mut c);
            let out = h1.iter().zip(&o).map(|(x, y)| x + y).collect();
            (out, c)
        }
    }
}

/// Multi-head attention on `c.attn_in`; fills q/k/v/probs/ctx and returns
/// `ctx · W^O + b^O`.
fn attention_block(config: &ModelConfig, p: &LayerParams, c: &mut LayerCache, attention: &[bool]) -> Vec<f32> {
    let t = attention.len();
    c.q = linear(&c.attn_in, t, &p.wq, &p.bq);
    c.k = linear(&c.attn_in, t, &p.wk, &p.bk);
    c.v = linear(&c.attn_in, t, &p.wv, &p.bv);
    let (probs, ctx) = attend(config, &c.q, &c.k, &c.v, attention);
    c.probs = probs;
    c.ctx = ctx;
    linear(&c.ctx, t, &p.wo, &p.bo)
}

fn ffn_block(config: &ModelConfig, p: &LayerParams, c: &mut LayerCache) -> Vec<f32> {
    let t = c.ffn_in.len() / config.hidden;
    c.z = linear(&c.ffn_in, t, &p.w1, &p.b1);
    c.act = c.z.iter().map(|&x| gelu_scalar(x)).collect();
    linear(&c.act, t, &p.w2, &p.b2)
}

/// Scaled dot-product attention per head. Returns (`heads × T × T`
/// probabilities, `T × D` concatenated context).
pub(crate) fn attend(
    config: &ModelConfig,
    q: &[f32],
    k: &[f32],
    v: &[f32],
    attention: &[bool],
) -> (Vec<f32>, Vec<f32>) {
    let t = attention.len();
    let d = config.hidden;
    let dk = config.head_dim;
    let scale = 1.0 / libm::sqrtf(dk as f32);
    let causal = config.variant.is_causal();
    let mut probs = vec![0.0f32; config.heads * t * t];
    let mut ctx = vec![0.0f32; t * d];
    let mut qh = vec![0.0f32; t * dk];
    let mut kh = vec![0.0f32; t * dk];
    for head in 0..config.heads {
        let off = head * dk;
        gather_head(q, d, off, dk, &mut qh);
        gather_head(k, d, off, dk, &mut kh);
        let ph = &mut probs[head * t * t..(head + 1) * t * t];
        for i in 0..t {
            let row = &mut ph[i * t..(i + 1) * t];
            for (j, s) in row.iter_mut().enumerate() {
                *s = dot(&qh[i * dk..(i + 1) * dk], &kh[j * dk..(j + 1) * dk]) * scale;
            }
            masked_softmax_in_place(row, |j| attention[j] && (!causal || j <= i));
            let out = &mut ctx[i * d + off..i * d + off + dk];
            for (j, &pij) in row.iter().enumerate() {
                let vr = &v[j * d + off..j * d + off + dk];
                for (o, &vv) in out.iter_mut().zip(vr) {
                    *o += pij * vv;
                }
            }
        }
    }
    (probs, ctx)
}

pub(crate) fn gather_head(src: &[f32], d: usize, off: usize, dk: usize, dst: &mut [f32]) {
    for (r, chunk) in dst.chunks_exact_mut(dk).enumerate() {
        chunk.copy_from_slice(&src[r * d + off..r * d + off + dk]);
    }
}

/// `x · W + b` for `rows` row vectors.
pub(crate) fn linear(x: &[f32], rows: usize, w: &Matrix, b: &[f32]) -> Vec<f32> {
    let (n_in, n_out) = w.shape();
    let mut out = Vec::with_capacity(rows * n_out);
    for _ in 0..rows {
        out.extend_from_slice(b);
    }
    gemm_nn(rows, n_in, n_out, x, w.as_slice(), &mut out);
    out
}

/// Returns (normalized output, pre-gain normalized rows, per-row 1/σ).
pub(crate) fn layer_norm_rows(
    x: &[f32],
    rows: usize,
    gain: &[f32],
    bias: &[f32],
    eps: f32,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let d = gain.len();
    let ones = vec![1.0f32; d];
    let zeros = vec![0.0f32; d];
    let mut out = vec![0.0f32; rows * d];
    let mut xhat = vec![0.0f32; rows * d];
    let mut inv = Vec::with_capacity(rows);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        inv.push(normalize_row(xr, &ones, &zeros, eps, &mut xhat[r * d..(r + 1) * d]));
        for ((o, &xh), (&g, &b)) in out[r * d..(r + 1) * d]
            .iter_mut()
            .zip(&xhat[r * d..(r + 1) * d])
            .zip(gain.iter().zip(bias))
        {
            *o = xh * g + b;
        }
    }
    (out, xhat, inv)
}

/// Attention probabilities of one head in one layer for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub sequence: usize,
    pub layer: usize,
    pub head: usize,
    /// `seq_len × seq_len`, row = query position.
    pub probs: Matrix,
}

/// Per-layer, per-head attention matrices for every sequence of `batch`,
/// ordered by sequence, then layer, then head.
pub fn attention_maps(config: &ModelConfig, params: &ParamSet, batch: &Batch) -> Result<Vec<AttentionMap>> {
    check_inputs(config, params, batch, config.layers)?;
    let t = batch.seq_len;
    let mut maps = Vec::new();
    for b in 0..batch.batch_size {
        let cache = sequence_forward(config, params, batch.sequence(b), config.layers);
        for (l, lc) in cache.layers.iter().enumerate() {
            for head in 0..config.heads {
                let probs = Matrix::from_vec(t, t, lc.probs[head * t * t..(head + 1) * t * t].to_vec())?;
                maps.push(AttentionMap {
                    sequence: b,
                    layer: l,
                    head,
                    probs,
                });
            }
        }
    }
    Ok(maps)
}

/// Multi-head attention output computed literally as a sum of per-head
/// terms `softmax(Q_i K_iᵀ/√d_k) V_i W^O_i` over row blocks of `W^O`
/// (bias added once). Reference path for the concat-then-project kernel.
pub fn mha_head_sum(config: &ModelConfig, layer: &LayerParams, x: &Matrix) -> Result<Matrix> {
    let t = x.rows();
    let d = config.hidden;
    let dk = config.head_dim;
    let q = linear(x.as_slice(), t, &layer.wq, &layer.bq);
    let k = linear(x.as_slice(), t, &layer.wk, &layer.bk);
    let v = linear(x.as_slice(), t, &layer.wv, &layer.bv);
    let attention = vec![true; t];
    let (_, ctx) = attend(config, &q, &k, &v, &attention);
    let mut out = Matrix::from_fn(t, d, |_, c| layer.bo[c]);
    for head in 0..config.heads {
        let ctx_i = Matrix::from_fn(t, dk, |r, c| ctx[r * d + head * dk + c]);
        let wo_i = Matrix::from_fn(dk, d, |r, c| layer.wo.get(head * dk + r, c));
        let term = crate::numerics::matmul(&ctx_i, &wo_i)?;
        for (o, v) in out.as_mut_slice().iter_mut().zip(term.as_slice()) {
            *o += v;
        }
    }
    Ok(out)
}

/// Concat-then-project multi-head attention output for full attention.
pub fn mha_concat(config: &ModelConfig, layer: &LayerParams, x: &Matrix) -> Result<Matrix> {
    let t = x.rows();
    let q = linear(x.as_slice(), t, &layer.wq, &layer.bq);
    let k = linear(x.as_slice(), t, &layer.wk, &layer.bk);
    let v = linear(x.as_slice(), t, &layer.wv, &layer.bv);
    let attention = vec![true; t];
    let (_, ctx) = attend(config, &q, &k, &v, &attention);
    Matrix::from_vec(t, config.hidden, linear(&ctx, t, &layer.wo, &layer.bo))
}
