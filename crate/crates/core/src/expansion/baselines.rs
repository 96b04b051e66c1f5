use super::SourceTargetPair;
use crate::numerics::{Matrix, SeededRng};
use crate::transformer::{ModelConfig, ParamSet, TensorId};
use crate::Result;

/// Truncated normal (σ = 0.02) matrices, zero biases, unit LayerNorm gains.
pub fn rand_init(config: &ModelConfig, seed: u64) -> Result<ParamSet> {
    config.validate()?;
    Ok(ParamSet::random(config, &mut SeededRng::new(seed)))
}

fn paste(dst: &mut [f32], dst_cols: usize, src: &[f32], src_cols: usize) {
    if src_cols == 0 {
        return;
    }
    for (r, row) in src.chunks(src_cols).enumerate() {
        dst[r * dst_cols..r * dst_cols + src_cols].copy_from_slice(row);
    }
}

/// Source tensors copied into the top-left corner of freshly initialized
/// target tensors; source layer `l` lands in target layer `l`. Everything
/// else keeps its [`rand_init`] value.
pub fn direct_copy(pair: &SourceTargetPair<'_>, seed: u64) -> Result<ParamSet> {
    pair.validate()?;
    let (s, t) = (pair.source, pair.target);
    let mut out = rand_init(t, seed)?;
    for id in TensorId::all(s.layers) {
        let src = pair.params.get(id);
        let src_shape = id.shape(s);
        let dst_shape = id.shape(t);
        let dst = out.get_mut(id);
        if src_shape.len() == 2 {
            paste(dst, dst_shape[1], src, src_shape[1]);
        } else {
            dst[..src.len()].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// `true` when `m` carries `src` in its top-left corner.
pub fn has_corner(m: &Matrix, src: &Matrix) -> bool {
    m.rows() >= src.rows() && m.cols() >= src.cols() && m.top_left(src.rows(), src.cols()) == *src
}
