use alloc::vec::Vec;

use super::{expand_bias, expand_out, expn, expn_with_upper, ExpansionPlan, MappingFn, SourceTargetPair, Strategy};
use crate::numerics::Matrix;
use crate::transformer::{LayerNormParams, LayerParams, LayerTensor, ParamSet};
use crate::{Error, Result};

const MATRICES: [LayerTensor; 6] = [
    LayerTensor::Wq,
    LayerTensor::Wk,
    LayerTensor::Wv,
    LayerTensor::Wo,
    LayerTensor::W1,
    LayerTensor::W2,
];

fn check_plan(pair: &SourceTargetPair<'_>, plan: &ExpansionPlan) -> Result<()> {
    pair.validate()?;
    let (s, t) = (pair.source, pair.target);
    let fits = |m: &MappingFn, src: usize, tgt: usize| m.src_len() == src && m.len() == tgt;
    if !fits(&plan.hidden, s.hidden, t.hidden)
        || !fits(&plan.heads, s.heads, t.heads)
        || !fits(&plan.ffn, s.ffn_dim, t.ffn_dim)
        || plan.head_dim != s.head_dim
    {
        return Err(Error::InvalidMapping("plan does not match the source/target pair".into()));
    }
    plan.check_constraints()
}

fn matrix(layer: &LayerParams, t: LayerTensor) -> &Matrix {
    match t {
        LayerTensor::Wq => &layer.wq,
        LayerTensor::Wk => &layer.wk,
        LayerTensor::Wv => &layer.wv,
        LayerTensor::Wo => &layer.wo,
        LayerTensor::W1 => &layer.w1,
        LayerTensor::W2 => &layer.w2,
        _ => unreachable!("not a matrix"),
    }
}

fn matrix_mut(layer: &mut LayerParams, t: LayerTensor) -> &mut Matrix {
    match t {
        LayerTensor::Wq => &mut layer.wq,
        LayerTensor::Wk => &mut layer.wk,
        LayerTensor::Wv => &mut layer.wv,
        LayerTensor::Wo => &mut layer.wo,
        LayerTensor::W1 => &mut layer.w1,
        LayerTensor::W2 => &mut layer.w2,
        _ => unreachable!("not a matrix"),
    }
}

fn expand_norm(n: &LayerNormParams, g: &MappingFn) -> Result<LayerNormParams> {
    Ok(LayerNormParams {
        gain: expand_bias(&n.gain, g)?,
        bias: expand_bias(&n.bias, g)?,
    })
}

/// Widens one layer with FPI: matrices through `EXPN`, biases and
/// LayerNorm parameters by out-dimension duplication.
fn fpi_layer(src: &LayerParams, plan: &ExpansionPlan) -> Result<LayerParams> {
    let h = &plan.hidden;
    let hc = &plan.head_coords;
    Ok(LayerParams {
        wq: expn(&src.wq, h, hc)?,
        bq: expand_bias(&src.bq, hc)?,
        wk: expn(&src.wk, h, hc)?,
        bk: expand_bias(&src.bk, hc)?,
        wv: expn(&src.wv, h, hc)?,
        bv: expand_bias(&src.bv, hc)?,
        wo: expn(&src.wo, hc, h)?,
        bo: expand_bias(&src.bo, h)?,
        ln1: expand_norm(&src.ln1, h)?,
        w1: expn(&src.w1, h, &plan.ffn)?,
        b1: expand_bias(&src.b1, &plan.ffn)?,
        w2: expn(&src.w2, &plan.ffn, h)?,
        b2: expand_bias(&src.b2, h)?,
        ln2: expand_norm(&src.ln2, h)?,
    })
}

/// Embeddings, the shared norm and the output head. Only the hidden axis
/// of the embeddings grows; the head's hidden rows are rescaled so the
/// logits are unchanged.
fn expand_shell(src: &ParamSet, plan: &ExpansionPlan, layers: Vec<LayerParams>) -> Result<ParamSet> {
    let h = &plan.hidden;
    let vocab = MappingFn::identity(src.head.cols());
    Ok(ParamSet {
        tok_emb: expand_out(&src.tok_emb, h)?,
        pos_emb: expand_out(&src.pos_emb, h)?,
        norm: expand_norm(&src.norm, h)?,
        layers,
        head: expn(&src.head, h, &vocab)?,
        head_bias: src.head_bias.clone(),
    })
}

/// Function-preserving width expansion. The result has the target width
/// and the source depth.
pub fn fpi_expand(pair: &SourceTargetPair<'_>, plan: &ExpansionPlan) -> Result<ParamSet> {
    check_plan(pair, plan)?;
    let layers = pair
        .params
        .layers
        .iter()
        .map(|l| fpi_layer(l, plan))
        .collect::<Result<Vec<_>>>()?;
    expand_shell(pair.params, plan, layers)
}

/// Advanced knowledge initialization: like FPI, except that the columns
/// appended to each matrix of layer `l` are taken from layer `l + 1`
/// (in-expanded with the same mapping, columns chosen by that layer's own
/// out-mapping). The top layer has no upper neighbour and is expanded with
/// FPI.
pub fn aki_expand(pair: &SourceTargetPair<'_>, plan: &ExpansionPlan) -> Result<ParamSet> {
    check_plan(pair, plan)?;
    let src = &pair.params.layers;
    if src.len() < 2 {
        return Err(Error::NoUpperLayer);
    }
    if plan.strategy != Strategy::Aki || plan.upper.len() != src.len() - 1 {
        return Err(Error::InvalidMapping("plan was not built for AKI".into()));
    }
    let mut layers = Vec::with_capacity(src.len());
    for (l, cur) in src.iter().enumerate() {
        let mut out = fpi_layer(cur, plan)?;
        if let Some(up) = plan.upper.get(l) {
            let lifted = up.heads.lift(plan.head_dim);
            for t in MATRICES {
                let (g_in, _) = plan.matrix_mappings(t).expect("matrix");
                let upper_out = if t == LayerTensor::W1 { &up.ffn } else { &lifted };
                *matrix_mut(&mut out, t) = expn_with_upper(matrix(cur, t), matrix(&src[l + 1], t), g_in, upper_out)?;
            }
        }
        layers.push(out);
    }
    expand_shell(pair.params, plan, layers)
}
