//! Naive `f64` re-implementation of the forward pass and loss, written
//! independently of the crate's kernels. Used as the finite-difference
//! oracle for gradients and as a second route for the forward pass.

#![allow(dead_code)]

use std::collections::BTreeMap;

use growformer_core::transformer::{Batch, LayerTensor, ModelConfig, ParamSet, TensorId, Variant};

pub struct Params64 {
    t: BTreeMap<TensorId, Vec<f64>>,
}

impl Params64 {
    pub fn from(params: &ParamSet) -> Self {
        let t = params
            .ids()
            .into_iter()
            .map(|id| (id, params.get(id).iter().map(|&v| v as f64).collect()))
            .collect();
        Self { t }
    }

    pub fn get(&self, id: TensorId) -> &[f64] {
        &self.t[&id]
    }

    pub fn get_mut(&mut self, id: TensorId) -> &mut Vec<f64> {
        self.t.get_mut(&id).unwrap()
    }
}

fn lt(l: usize, t: LayerTensor) -> TensorId {
    TensorId::Layer(l, t)
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = (var + eps).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / sd * gain[i] + bias[i])
        .collect()
}

fn project(x: &[f64], w: &[f64], b: &[f64], n_in: usize, n_out: usize) -> Vec<f64> {
    (0..n_out)
        .map(|j| b[j] + (0..n_in).map(|i| x[i] * w[i * n_out + j]).sum::<f64>())
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Logits of one sequence, `T × vocab`.
pub fn sequence_logits(c: &ModelConfig, p: &Params64, ids: &[u32], attention: &[bool], depth: usize) -> Vec<Vec<f64>> {
    let d = c.hidden;
    let t = ids.len();
    let eps = c.ln_eps as f64;
    let enc = c.variant == Variant::PostLnEncoder;
    let mut h: Vec<Vec<f64>> = (0..t)
        .map(|pos| {
            (0..d)
                .map(|j| p.get(TensorId::TokEmb)[ids[pos] as usize * d + j] + p.get(TensorId::PosEmb)[pos * d + j])
                .collect()
        })
        .collect();
    if enc {
        h = h
            .iter()
            .map(|r| layer_norm(r, p.get(TensorId::NormGain), p.get(TensorId::NormBias), eps))
            .collect();
    }
    for l in 0..depth {
        let ln1 = |x: &Vec<f64>| layer_norm(x, p.get(lt(l, LayerTensor::Ln1Gain)), p.get(lt(l, LayerTensor::Ln1Bias)), eps);
        let ln2 = |x: &Vec<f64>| layer_norm(x, p.get(lt(l, LayerTensor::Ln2Gain)), p.get(lt(l, LayerTensor::Ln2Bias)), eps);
        let attn_in: Vec<Vec<f64>> = if enc { h.clone() } else { h.iter().map(ln1).collect() };
        let proj = |x: &Vec<f64>, w: LayerTensor, b: LayerTensor| project(x, p.get(lt(l, w)), p.get(lt(l, b)), d, d);
        let q: Vec<_> = attn_in.iter().map(|x| proj(x, LayerTensor::Wq, LayerTensor::Bq)).collect();
        let k: Vec<_> = attn_in.iter().map(|x| proj(x, LayerTensor::Wk, LayerTensor::Bk)).collect();
        let v: Vec<_> = attn_in.iter().map(|x| proj(x, LayerTensor::Wv, LayerTensor::Bv)).collect();
        let dk = c.head_dim;
        let mut ctx = vec![vec![0.0; d]; t];
        for head in 0..c.heads {
            for i in 0..t {
                let allowed: Vec<bool> = (0..t).map(|j| attention[j] && (enc || j <= i)).collect();
                let scores: Vec<f64> = (0..t)
                    .map(|j| {
                        (0..dk).map(|x| q[i][head * dk + x] * k[j][head * dk + x]).sum::<f64>() / (dk as f64).sqrt()
                    })
                    .collect();
                let m = (0..t).filter(|&j| allowed[j]).map(|j| scores[j]).fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    continue;
                }
                let e: Vec<f64> = (0..t).map(|j| if allowed[j] { (scores[j] - m).exp() } else { 0.0 }).collect();
                let s: f64 = e.iter().sum();
                for j in 0..t {
                    for x in 0..dk {
                        ctx[i][head * dk + x] += e[j] / s * v[j][head * dk + x];
                    }
                }
            }
        }
        let a: Vec<_> = ctx.iter().map(|x| proj(x, LayerTensor::Wo, LayerTensor::Bo)).collect();
        let f = c.ffn_dim;
        let ffn = |x: &Vec<f64>| {
            let z = project(x, p.get(lt(l, LayerTensor::W1)), p.get(lt(l, LayerTensor::B1)), d, f);
            let act: Vec<f64> = z.into_iter().map(gelu).collect();
            project(&act, p.get(lt(l, LayerTensor::W2)), p.get(lt(l, LayerTensor::B2)), f, d)
        };
        h = (0..t)
            .map(|i| {
                let r1: Vec<f64> = h[i].iter().zip(&a[i]).map(|(x, y)| x + y).collect();
                if enc {
                    let h1 = ln1(&r1);
                    let o = ffn(&h1);
                    ln2(&h1.iter().zip(&o).map(|(x, y)| x + y).collect())
                } else {
                    let o = ffn(&ln2(&r1));
                    r1.iter().zip(&o).map(|(x, y)| x + y).collect()
                }
            })
            .collect();
    }
    if !enc {
        h = h
            .iter()
            .map(|r| layer_norm(r, p.get(TensorId::NormGain), p.get(TensorId::NormBias), eps))
            .collect();
    }
    h.iter()
        .map(|x| project(x, p.get(TensorId::HeadWeight), p.get(TensorId::HeadBias), d, c.vocab))
        .collect()
}

/// Mean cross-entropy over labeled positions of the whole batch.
pub fn batch_loss(c: &ModelConfig, p: &Params64, batch: &Batch, depth: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for b in 0..batch.batch_size {
        let s = batch.sequence(b);
        let logits = sequence_logits(c, p, s.ids, s.attention, depth);
        for (row, label) in logits.iter().zip(s.labels) {
            if let Some(label) = label {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[*label as usize];
                n += 1;
            }
        }
    }
    total / n as f64
}

/// Central-difference gradient of `batch_loss` for one entry.
pub fn central_difference(c: &ModelConfig, params: &Params64, batch: &Batch, id: TensorId, idx: usize, h: f64) -> f64 {
    let mut p = Params64 { t: params.t.clone() };
    let orig = p.get(id)[idx];
    p.get_mut(id)[idx] = orig + h;
    let up = batch_loss(c, &p, batch, c.layers);
    p.get_mut(id)[idx] = orig - h;
    let down = batch_loss(c, &p, batch, c.layers);
    (up - down) / (2.0 * h)
}
