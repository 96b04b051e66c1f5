use alloc::format;
use alloc::vec::Vec;

use crate::transformer::ParamSet;
use crate::{Error, Result};

/// Source layer index for each target layer: `⌊lt/ls⌋` full copies bottom-up,
/// then the top `lt mod ls` layers.
pub fn stack_order(ls: usize, lt: usize) -> Result<Vec<usize>> {
    if ls == 0 || ls > lt {
        return Err(Error::IncompatibleGeometry(format!("cannot stack {ls} layers into {lt}")));
    }
    let k = lt / ls;
    let rem = lt - k * ls;
    Ok((0..k).flat_map(|_| 0..ls).chain(ls - rem..ls).collect())
}

/// Stacks a widened model up to `target_layers`. Embeddings, the shared norm
/// and the head are taken once.
pub fn depth_stack(widened: &ParamSet, target_layers: usize) -> Result<ParamSet> {
    let order = stack_order(widened.layers.len(), target_layers)?;
    Ok(ParamSet {
        tok_emb: widened.tok_emb.clone(),
        pos_emb: widened.pos_emb.clone(),
        norm: widened.norm.clone(),
        layers: order.iter().map(|&i| widened.layers[i].clone()).collect(),
        head: widened.head.clone(),
        head_bias: widened.head_bias.clone(),
    })
}
