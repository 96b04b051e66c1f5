//! Minimal deterministic transformer runtime.
//!
//! Two variants share one parameter layout: a post-LN encoder trained with
//! masked-LM and a pre-LN decoder trained with next-token prediction. No
//! dropout; learned absolute position embeddings; no token-type embeddings.
//! Multi-head attention is concat-then-project with `W^O` partitioned into
//! per-head row blocks.

mod backward;
mod batch;
mod config;
mod forward;
mod loss;
mod params;

pub use backward::{backward, backward_with, combine, sequence_gradient, BackwardOptions, Gradients, SequenceGradient};
pub use batch::{Batch, SequenceView};
pub use config::{ModelConfig, Variant};
pub use forward::{attention_maps, check_inputs, forward, forward_depth, mha_concat, mha_head_sum, AttentionMap, ForwardOutput};
pub use loss::{lm_loss, loss, mlm_loss, row_cross_entropy};
pub use params::{FreezeSet, LayerNormParams, LayerParams, LayerTensor, ParamSet, TensorId, INIT_STD};

/// Forward pass plus the variant's loss.
pub fn evaluate(config: &ModelConfig, params: &ParamSet, batch: &Batch) -> crate::Result<f64> {
    let out = forward(config, params, batch)?;
    loss(config, &out.logits, batch)
}
