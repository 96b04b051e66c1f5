#![allow(dead_code)]

pub mod checks;
pub mod oracle;
pub mod reference;

use growformer_core::transformer::{Batch, ModelConfig, ParamSet, TensorId, Variant};
use growformer_core::SeededRng;

/// Random parameters with non-trivial biases and gains, so that every
/// gradient path carries signal.
pub fn lively_params(config: &ModelConfig, seed: u64, scale: f32) -> ParamSet {
    let mut rng = SeededRng::new(seed);
    let mut p = ParamSet::zeros(config);
    for id in p.ids() {
        let is_gain = matches!(id, TensorId::NormGain)
            || matches!(
                id,
                TensorId::Layer(_, growformer_core::transformer::LayerTensor::Ln1Gain | growformer_core::transformer::LayerTensor::Ln2Gain)
            );
        for v in p.get_mut(id) {
            let r = rng.uniform() * 2.0 - 1.0;
            *v = if is_gain { 1.0 + 0.3 * r } else { scale * r };
        }
    }
    p
}

pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig::new(variant, 1, 2, 4, 11, 8).with_ffn_dim(16)
}

/// Random batch with roughly a third of positions labeled (encoder) or
/// every position labeled (decoder).
pub fn random_batch(config: &ModelConfig, batch: usize, seq: usize, seed: u64) -> Batch {
    let mut rng = SeededRng::new(seed);
    let n = batch * seq;
    let ids: Vec<u32> = (0..n).map(|_| rng.sample_index(config.vocab).unwrap() as u32).collect();
    let labels: Vec<Option<u32>> = (0..n)
        .map(|i| {
            let keep = config.variant == Variant::PreLnDecoder || rng.uniform() < 0.35 || i == 0;
            keep.then(|| rng.sample_index(config.vocab).unwrap() as u32)
        })
        .collect();
    Batch::new(batch, seq, ids, vec![true; n], labels).unwrap()
}
