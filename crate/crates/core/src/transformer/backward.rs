use alloc::vec;
use alloc::vec::Vec;

use super::forward::{check_inputs, gather_head, sequence_forward, LayerCache, SequenceCache};
use super::{Batch, FreezeSet, LayerParams, LayerTensor, ModelConfig, ParamSet, SequenceView, TensorId, Variant};
use crate::numerics::{dot, gelu_grad_scalar, gemm_nt, gemm_tn, normalize_row_backward, softmax_in_place};
use crate::{Error, Result};

/// What to differentiate and how to scale it.
#[derive(Clone, Copy, Debug)]
pub struct BackwardOptions<'a> {
    pub freeze: &'a FreezeSet,
    /// Number of bottom layers in the (sub-)model; the rest are skipped.
    pub depth: usize,
    /// Multiplies the mean loss before differentiation.
    pub loss_scale: f32,
}

/// Unnormalized contribution of one sequence.
#[derive(Clone, Debug)]
pub struct SequenceGradient {
    pub loss_sum: f64,
    pub labels: usize,
    pub grads: ParamSet,
}

/// Mean loss with gradients of `loss_scale * loss`.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub loss: f64,
    pub labels: usize,
    pub grads: ParamSet,
}

/// Exact gradients of the variant's objective with respect to every
/// parameter, at full depth with nothing frozen.
pub fn backward(config: &ModelConfig, params: &ParamSet, batch: &Batch) -> Result<Gradients> {
    let freeze = FreezeSet::none();
    backward_with(
        config,
        params,
        batch,
        BackwardOptions {
            freeze: &freeze,
            depth: config.layers,
            loss_scale: 1.0,
        },
    )
}

pub fn backward_with(
    config: &ModelConfig,
    params: &ParamSet,
    batch: &Batch,
    opts: BackwardOptions<'_>,
) -> Result<Gradients> {
    check_inputs(config, params, batch, opts.depth)?;
    let parts = (0..batch.batch_size).map(|b| sequence_gradient(config, params, batch.sequence(b), opts));
    combine(parts, opts.loss_scale)
}

/// Sums per-sequence parts in iteration order and normalizes by the total
/// label count. Parallel callers must feed parts in sequence order to get
/// bitwise-identical results.
pub fn combine(parts: impl IntoIterator<Item = SequenceGradient>, loss_scale: f32) -> Result<Gradients> {
    let mut iter = parts.into_iter();
    let Some(first) = iter.next() else {
        return Err(Error::NoLabels);
    };
    let mut loss_sum = first.loss_sum;
    let mut labels = first.labels;
    let mut grads = first.grads;
    for part in iter {
        loss_sum += part.loss_sum;
        labels += part.labels;
        grads.add_assign(&part.grads);
    }
    if labels == 0 {
        return Err(Error::NoLabels);
    }
    grads.scale(loss_scale / labels as f32);
    Ok(Gradients {
        loss: loss_sum / labels as f64,
        labels,
        grads,
    })
}

/// Forward and backward for one sequence; gradients are of the summed
/// (not mean) cross-entropy over its labeled positions.
pub fn sequence_gradient(
    config: &ModelConfig,
    params: &ParamSet,
    seq: SequenceView<'_>,
    opts: BackwardOptions<'_>,
) -> SequenceGradient {
    let cache = sequence_forward(config, params, seq, opts.depth);
    let t = cache.len;
    let d = config.hidden;
    let vsz = config.vocab;
    let freeze = opts.freeze;
    let trainable = |id: TensorId| !freeze.is_frozen(id);
    let mut grads = ParamSet::zeros(config);

    // cross-entropy
    let mut dlogits = cache.logits.clone();
    let mut loss_sum = 0.0f64;
    let mut labels = 0usize;
    for (r, label) in seq.labels.iter().enumerate() {
        let row = &mut dlogits[r * vsz..(r + 1) * vsz];
        match *label {
            Some(label) => {
                loss_sum += super::loss::row_cross_entropy(&cache.logits[r * vsz..(r + 1) * vsz], label);
                labels += 1;
                softmax_in_place(row);
                row[label as usize] -= 1.0;
            }
            None => row.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    let encoder = config.variant == Variant::PostLnEncoder;
    let norm_trainable = trainable(TensorId::NormGain) || trainable(TensorId::NormBias);
    let emb_trainable = trainable(TensorId::TokEmb) || trainable(TensorId::PosEmb) || (encoder && norm_trainable);
    let layer_trainable: Vec<bool> = (0..opts.depth)
        .map(|l| LayerTensor::ALL.iter().any(|&lt| trainable(TensorId::Layer(l, lt))))
        .collect();
    // need_input[l]: something at or below the input of layer l wants a gradient
    let mut need_input = vec![emb_trainable; opts.depth + 1];
    for l in 1..=opts.depth {
        need_input[l] = need_input[l - 1] || layer_trainable[l - 1];
    }

    // head
    if trainable(TensorId::HeadWeight) {
        gemm_tn(d, t, vsz, &cache.head_in, &dlogits, grads.head.as_mut_slice());
    }
    if trainable(TensorId::HeadBias) {
        col_sum_into(&dlogits, vsz, &mut grads.head_bias);
    }
    let need_head_in = need_input[opts.depth] || (!encoder && norm_trainable);
    if !need_head_in {
        return SequenceGradient {
            loss_sum,
            labels,
            grads,
        };
    }
    let mut dh = vec![0.0f32; t * d];
    gemm_nt(t, vsz, d, &dlogits, params.head.as_slice(), &mut dh);

    if !encoder {
        dh = norm_backward(
            &cache,
            &params.norm.gain,
            &dh,
            d,
            trainable(TensorId::NormGain).then_some(&mut grads.norm.gain),
            trainable(TensorId::NormBias).then_some(&mut grads.norm.bias),
        );
    }

    for l in (0..opts.depth).rev() {
        if !need_input[l + 1] {
            return SequenceGradient {
                loss_sum,
                labels,
                grads,
            };
        }
        let fz = |lt: LayerTensor| freeze.is_frozen(TensorId::Layer(l, lt));
        dh = layer_backward(
            config,
            &params.layers[l],
            &cache.layers[l],
            &dh,
            &mut grads.layers[l],
            &fz,
            need_input[l],
        );
    }
    if !emb_trainable {
        return SequenceGradient {
            loss_sum,
            labels,
            grads,
        };
    }

    if encoder {
        dh = norm_backward(
            &cache,
            &params.norm.gain,
            &dh,
            d,
            trainable(TensorId::NormGain).then_some(&mut grads.norm.gain),
            trainable(TensorId::NormBias).then_some(&mut grads.norm.bias),
        );
    }
    for (p, &id) in seq.ids.iter().enumerate() {
        let g = &dh[p * d..(p + 1) * d];
        if trainable(TensorId::TokEmb) {
            add_into(grads.tok_emb.row_mut(id as usize), g);
        }
        if trainable(TensorId::PosEmb) {
            add_into(grads.pos_emb.row_mut(p), g);
        }
    }
    SequenceGradient {
        loss_sum,
        labels,
        grads,
    }
}

fn norm_backward(
    cache: &SequenceCache,
    gain: &[f32],
    dy: &[f32],
    d: usize,
    dgain: Option<&mut Vec<f32>>,
    dbias: Option<&mut Vec<f32>>,
) -> Vec<f32> {
    ln_backward(&cache.norm_xhat, &cache.norm_inv, gain, dy, d, dgain, dbias)
}

fn ln_backward(
    xhat: &[f32],
    inv: &[f32],
    gain: &[f32],
    dy: &[f32],
    d: usize,
    mut dgain: Option<&mut Vec<f32>>,
    mut dbias: Option<&mut Vec<f32>>,
) -> Vec<f32> {
    let mut dx = vec![0.0f32; dy.len()];
    for (r, &inv_std) in inv.iter().enumerate() {
        let span = r * d..(r + 1) * d;
        normalize_row_backward(
            &xhat[span.clone()],
            inv_std,
            gain,
            &dy[span.clone()],
            &mut dx[span],
            dgain.as_deref_mut().map(|v| v.as_mut_slice()),
            dbias.as_deref_mut().map(|v| v.as_mut_slice()),
        );
    }
    dx
}

/// Backward through one layer. Returns the gradient w.r.t. the layer input
/// (empty when `need_input` is false).
fn layer_backward(
    config: &ModelConfig,
    p: &LayerParams,
    c: &LayerCache,
    dout: &[f32],
    g: &mut LayerParams,
    frozen: &dyn Fn(LayerTensor) -> bool,
    need_input: bool,
) -> Vec<f32> {
    let d = config.hidden;
    match config.variant {
        Variant::PostLnEncoder => {
            let dr2 = ln_backward(
                &c.ln2_xhat,
                &c.ln2_inv,
                &p.ln2.gain,
                dout,
                d,
                (!frozen(LayerTensor::Ln2Gain)).then_some(&mut g.ln2.gain),
                (!frozen(LayerTensor::Ln2Bias)).then_some(&mut g.ln2.bias),
            );
            let mut dffn_in = dr2.clone();
            ffn_backward(config, p, c, &dr2, g, frozen, &mut dffn_in);
            let dr1 = ln_backward(
                &c.ln1_xhat,
                &c.ln1_inv,
                &p.ln1.gain,
                &dffn_in,
                d,
                (!frozen(LayerTensor::Ln1Gain)).then_some(&mut g.ln1.gain),
                (!frozen(LayerTensor::Ln1Bias)).then_some(&mut g.ln1.bias),
            );
            let mut dinput = if need_input { dr1.clone() } else { Vec::new() };
            attention_backward(config, p, c, &dr1, g, frozen, need_input.then_some(&mut dinput));
            dinput
        }
        Variant::PreLnDecoder => {
            let mut dn2 = vec![0.0f32; dout.len()];
            ffn_backward(config, p, c, dout, g, frozen, &mut dn2);
            let mut dh1 = ln_backward(
                &c.ln2_xhat,
                &c.ln2_inv,
                &p.ln2.gain,
                &dn2,
                d,
                (!frozen(LayerTensor::Ln2Gain)).then_some(&mut g.ln2.gain),
                (!frozen(LayerTensor::Ln2Bias)).then_some(&mut g.ln2.bias),
            );
            add_into(&mut dh1, dout);
            let ln1_trainable = !frozen(LayerTensor::Ln1Gain) || !frozen(LayerTensor::Ln1Bias);
            let mut dn1 = vec![0.0f32; dout.len()];
            let want_dn1 = need_input || ln1_trainable;
            attention_backward(config, p, c, &dh1, g, frozen, want_dn1.then_some(&mut dn1));
            if !want_dn1 {
                return Vec::new();
            }
            let dx = ln_backward(
                &c.ln1_xhat,
                &c.ln1_inv,
                &p.ln1.gain,
                &dn1,
                d,
                (!frozen(LayerTensor::Ln1Gain)).then_some(&mut g.ln1.gain),
                (!frozen(LayerTensor::Ln1Bias)).then_some(&mut g.ln1.bias),
            );
            if !need_input {
                return Vec::new();
            }
            let mut dinput = dh1;
            add_into(&mut dinput, &dx);
            dinput
        }
    }
}

/// Backward of `act(ffn_in · W1 + b1) · W2 + b2`; accumulates into `dffn_in`.
fn ffn_backward(
    config: &ModelConfig,
    p: &LayerParams,
    c: &LayerCache,
    dout: &[f32],
    g: &mut LayerParams,
    frozen: &dyn Fn(LayerTensor) -> bool,
    dffn_in: &mut [f32],
) {
    let d = config.hidden;
    let f = config.ffn_dim;
    let t = dout.len() / d;
    if !frozen(LayerTensor::W2) {
        gemm_tn(f, t, d, &c.act, dout, g.w2.as_mut_slice());
    }
    if !frozen(LayerTensor::B2) {
        col_sum_into(dout, d, &mut g.b2);
    }
    let mut dz = vec![0.0f32; t * f];
    gemm_nt(t, d, f, dout, p.w2.as_slice(), &mut dz);
    for (dzv, &z) in dz.iter_mut().zip(&c.z) {
        *dzv *= gelu_grad_scalar(z);
    }
    if !frozen(LayerTensor::W1) {
        gemm_tn(d, t, f, &c.ffn_in, &dz, g.w1.as_mut_slice());
    }
    if !frozen(LayerTensor::B1) {
        col_sum_into(&dz, f, &mut g.b1);
    }
    gemm_nt(t, f, d, &dz, p.w1.as_slice(), dffn_in);
}

/// Backward of multi-head attention given the gradient of its output.
/// Accumulates the gradient w.r.t. `attn_in` into `dattn_in` when given.
fn attention_backward(
    config: &ModelConfig,
    p: &LayerParams,
    c: &LayerCache,
    da: &[f32],
    g: &mut LayerParams,
    frozen: &dyn Fn(LayerTensor) -> bool,
    dattn_in: Option<&mut Vec<f32>>,
) {
    let d = config.hidden;
    let dk = config.head_dim;
    let t = da.len() / d;
    let scale = 1.0 / libm::sqrtf(dk as f32);

    if !frozen(LayerTensor::Wo) {
        gemm_tn(d, t, d, &c.ctx, da, g.wo.as_mut_slice());
    }
    if !frozen(LayerTensor::Bo) {
        col_sum_into(da, d, &mut g.bo);
    }
    let mut dctx = vec![0.0f32; t * d];
    gemm_nt(t, d, d, da, p.wo.as_slice(), &mut dctx);

    let mut dq = vec![0.0f32; t * d];
    let mut dk_all = vec![0.0f32; t * d];
    let mut dv = vec![0.0f32; t * d];
    let mut qh = vec![0.0f32; t * dk];
    let mut kh = vec![0.0f32; t * dk];
    let mut vh = vec![0.0f32; t * dk];
    let mut dch = vec![0.0f32; t * dk];
    let mut ds = vec![0.0f32; t * t];
    for head in 0..config.heads {
        let off = head * dk;
        gather_head(&c.q, d, off, dk, &mut qh);
        gather_head(&c.k, d, off, dk, &mut kh);
        gather_head(&c.v, d, off, dk, &mut vh);
        gather_head(&dctx, d, off, dk, &mut dch);
        let probs = &c.probs[head * t * t..(head + 1) * t * t];
        for i in 0..t {
            let prow = &probs[i * t..(i + 1) * t];
            let dsrow = &mut ds[i * t..(i + 1) * t];
            let mut s = 0.0f32;
            for j in 0..t {
                let dp = dot(&dch[i * dk..(i + 1) * dk], &vh[j * dk..(j + 1) * dk]);
                dsrow[j] = dp;
                s += prow[j] * dp;
            }
            for j in 0..t {
                dsrow[j] = prow[j] * (dsrow[j] - s) * scale;
            }
        }
        for i in 0..t {
            for j in 0..t {
                let dsij = ds[i * t + j];
                let pij = probs[i * t + j];
                for x in 0..dk {
                    dq[i * d + off + x] += dsij * kh[j * dk + x];
                    dk_all[j * d + off + x] += dsij * qh[i * dk + x];
                    dv[j * d + off + x] += pij * dch[i * dk + x];
                }
            }
        }
    }

    for (w_id, b_id, dy, gw, gb) in [
        (LayerTensor::Wq, LayerTensor::Bq, &dq, &mut g.wq, &mut g.bq),
        (LayerTensor::Wk, LayerTensor::Bk, &dk_all, &mut g.wk, &mut g.bk),
        (LayerTensor::Wv, LayerTensor::Bv, &dv, &mut g.wv, &mut g.bv),
    ] {
        if !frozen(w_id) {
            gemm_tn(d, t, d, &c.attn_in, dy, gw.as_mut_slice());
        }
        if !frozen(b_id) {
            col_sum_into(dy, d, gb);
        }
    }
    if let Some(dx) = dattn_in {
        gemm_nt(t, d, d, &dq, p.wq.as_slice(), dx);
        gemm_nt(t, d, d, &dk_all, p.wk.as_slice(), dx);
        gemm_nt(t, d, d, &dv, p.wv.as_slice(), dx);
    }
}

fn col_sum_into(m: &[f32], cols: usize, out: &mut [f32]) {
    for row in m.chunks_exact(cols) {
        add_into(out, row);
    }
}

#[inline]
fn add_into(dst: &mut [f32], src: &[f32]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}
