use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Dense row-major `f32` matrix.
///
/// For weights the row index is the in-dimension and the column index the
/// out-dimension, so a projection is `x · W` with `x` a row vector.
#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                op: "Matrix::from_vec",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference. Shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f32 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn fill(&mut self, v: f32) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self[..rows, ..cols]` as a new matrix.
    pub fn top_left(&self, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self.get(r, c))
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "{:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

/// `A · B`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            expected: (a.cols, b.cols),
            found: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm_nn(a.rows, a.cols, b.cols, &a.data, &b.data, &mut out.data);
    Ok(out)
}

/// `out[r][j] += Σ_kk coef(r, kk) · b[kk][j]` for four output rows, `kk`
/// ascending. Sharing each `b` row across four outputs keeps the kernel off
/// the memory bus without changing any element's accumulation order.
#[inline(always)]
fn tile4(out: &mut [f32], n: usize, k: usize, b: &[f32], coef: impl Fn(usize, usize) -> f32) {
    let (o0, rest) = out.split_at_mut(n);
    let (o1, rest) = rest.split_at_mut(n);
    let (o2, o3) = rest.split_at_mut(n);
    for kk in 0..k {
        let b_row = &b[kk * n..(kk + 1) * n];
        let (c0, c1, c2, c3) = (coef(0, kk), coef(1, kk), coef(2, kk), coef(3, kk));
        for ((((x0, x1), x2), x3), &bv) in o0.iter_mut().zip(o1.iter_mut()).zip(o2.iter_mut()).zip(o3.iter_mut()).zip(b_row) {
            *x0 += c0 * bv;
            *x1 += c1 * bv;
            *x2 += c2 * bv;
            *x3 += c3 * bv;
        }
    }
}

#[inline(always)]
fn axpy1(o_row: &mut [f32], n: usize, k: usize, b: &[f32], coef: impl Fn(usize) -> f32) {
    for kk in 0..k {
        let c = coef(kk);
        for (o, &bv) in o_row.iter_mut().zip(&b[kk * n..(kk + 1) * n]) {
            *o += c * bv;
        }
    }
}

/// `out += A · B` with `A: m×k`, `B: k×n`.
///
/// Each output element accumulates over `k` in ascending order, so the
/// result does not depend on vector width or row blocking.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let blocked = m / 4 * 4;
    for i in (0..blocked).step_by(4) {
        tile4(&mut out[i * n..(i + 4) * n], n, k, b, |r, kk| a[(i + r) * k + kk]);
    }
    for i in blocked..m {
        axpy1(&mut out[i * n..(i + 1) * n], n, k, b, |kk| a[i * k + kk]);
    }
}

/// `out += Aᵀ · B` with `A: k×m`, `B: k×n`; same accumulation order as
/// [`gemm_nn`].
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], out: &mut [f32]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let blocked = m / 4 * 4;
    for i in (0..blocked).step_by(4) {
        tile4(&mut out[i * n..(i + 4) * n], n, k, b, |r, kk| a[kk * m + i + r]);
    }
    for i in blocked..m {
        axpy1(&mut out[i * n..(i + 1) * n], n, k, b, |kk| a[kk * m + i]);
    }
}

/// `out += A · Bᵀ` with `A: m×k`, `B: n×k`; every element is a [`dot`].
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let blocked = m / 4 * 4;
    for i in (0..blocked).step_by(4) {
        let rows = [
            &a[i * k..(i + 1) * k],
            &a[(i + 1) * k..(i + 2) * k],
            &a[(i + 2) * k..(i + 3) * k],
            &a[(i + 3) * k..(i + 4) * k],
        ];
        for j in 0..n {
            let d = dot4(rows, &b[j * k..(j + 1) * k]);
            for r in 0..4 {
                out[(i + r) * n + j] += d[r];
            }
        }
    }
    for i in blocked..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// Four [`dot`]s against the same `b`, bitwise equal to calling [`dot`]
/// four times.
#[inline(always)]
fn dot4(a: [&[f32]; 4], b: &[f32]) -> [f32; 4] {
    let mut acc = [[0.0f32; 8]; 4];
    let chunks = b.len() / 8;
    for c in 0..chunks {
        let xb = &b[c * 8..c * 8 + 8];
        for r in 0..4 {
            let xa = &a[r][c * 8..c * 8 + 8];
            for l in 0..8 {
                acc[r][l] += xa[l] * xb[l];
            }
        }
    }
    let mut out = [0.0f32; 4];
    for r in 0..4 {
        let mut tail = 0.0f32;
        for i in chunks * 8..b.len() {
            tail += a[r][i] * b[i];
        }
        let s0 = (acc[r][0] + acc[r][4]) + (acc[r][2] + acc[r][6]);
        let s1 = (acc[r][1] + acc[r][5]) + (acc[r][3] + acc[r][7]);
        out[r] = (s0 + s1) + tail;
    }
    out
}

/// Dot product with eight fixed accumulator lanes, reduced pairwise.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    let s0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let s1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}
