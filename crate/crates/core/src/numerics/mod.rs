//! Dense `f32` kernels and seeded randomness.
//!
//! Every kernel uses a fixed accumulation order so results are bitwise
//! reproducible run to run.

mod matrix;
mod ops;
mod rng;

pub use matrix::{dot, gemm_nn, gemm_nt, gemm_tn, matmul, Matrix};
pub use ops::{gelu, gelu_grad_scalar, gelu_scalar, layer_norm, softmax_rows, DEFAULT_LN_EPS};
pub(crate) use ops::{masked_softmax_in_place, normalize_row, normalize_row_backward, softmax_in_place};
pub use rng::SeededRng;
