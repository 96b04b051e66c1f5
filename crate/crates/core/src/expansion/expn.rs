use alloc::format;
use alloc::vec::Vec;

use super::MappingFn;
use crate::numerics::Matrix;
use crate::{Error, Result};

fn check(op: &'static str, what: &str, mapping: &MappingFn, dim: usize) -> Result<()> {
    if mapping.src_len() != dim {
        return Err(Error::InvalidMapping(format!(
            "{op}: {what} mapping covers {} source positions, matrix has {dim}",
            mapping.src_len()
        )));
    }
    Ok(())
}

/// In-dimension expansion: row `i` of the result is row `g_in(i)` of `w`
/// divided by its count.
pub fn expand_in(w: &Matrix, g_in: &MappingFn) -> Result<Matrix> {
    check("expand_in", "in", g_in, w.rows())?;
    Ok(Matrix::from_fn(g_in.len(), w.cols(), |i, j| {
        w.get(g_in.get(i), j) / g_in.count_at(i) as f32
    }))
}

/// Out-dimension expansion: column `j` of the result is column `g_out(j)`.
pub fn expand_out(w: &Matrix, g_out: &MappingFn) -> Result<Matrix> {
    check("expand_out", "out", g_out, w.cols())?;
    Ok(Matrix::from_fn(w.rows(), g_out.len(), |i, j| w.get(i, g_out.get(j))))
}

/// `EXPN(W; g_in, g_out)`: in-dimension duplication with `1/C` rescaling,
/// then out-dimension duplication.
pub fn expn(w: &Matrix, g_in: &MappingFn, g_out: &MappingFn) -> Result<Matrix> {
    check("expn", "out", g_out, w.cols())?;
    expand_out(&expand_in(w, g_in)?, g_out)
}

/// Out-dimension duplication of a bias vector (no rescaling).
pub fn expand_bias(b: &[f32], g_out: &MappingFn) -> Result<Vec<f32>> {
    check("expand_bias", "out", g_out, b.len())?;
    Ok(g_out.map().iter().map(|&x| b[x]).collect())
}

/// Two-matrix expansion: both `current` and `upper` are in-expanded with
/// `g_in`; the first `d_out` columns come from the current layer and the
/// remaining ones from the upper layer, selected by `upper_out`.
pub fn expn_with_upper(current: &Matrix, upper: &Matrix, g_in: &MappingFn, upper_out: &MappingFn) -> Result<Matrix> {
    if current.shape() != upper.shape() {
        return Err(Error::ShapeMismatch {
            op: "expn_with_upper",
            expected: current.shape(),
            found: upper.shape(),
        });
    }
    check("expn_with_upper", "upper out", upper_out, current.cols())?;
    let cur = expand_in(current, g_in)?;
    let up = expand_in(upper, g_in)?;
    let d_out = current.cols();
    Ok(Matrix::from_fn(cur.rows(), upper_out.len(), |i, j| {
        if j < d_out {
            cur.get(i, j)
        } else {
            up.get(i, upper_out.get(j))
        }
    }))
}
