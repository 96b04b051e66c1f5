use alloc::collections::BTreeMap;

use super::AdamConfig;
use crate::transformer::{FreezeSet, ModelConfig, ParamSet, TensorId};
use crate::{Error, Result};

/// First and second moments plus a step counter per tensor. A frozen tensor's
/// counter and moments do not advance, so bias correction stays consistent
/// when it is unfrozen later.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub steps: BTreeMap<TensorId, u64>,
}

impl AdamState {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            m: ParamSet::zeros(config),
            v: ParamSet::zeros(config),
            steps: BTreeMap::new(),
        }
    }

    pub fn steps_of(&self, id: TensorId) -> u64 {
        self.steps.get(&id).copied().unwrap_or(0)
    }
}

/// One bias-corrected Adam update of every tensor not in `freeze`.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    lr: f32,
    cfg: &AdamConfig,
    freeze: &FreezeSet,
) -> Result<()> {
    let ids = params.ids();
    if grads.ids() != ids || state.m.ids() != ids {
        return Err(Error::InvalidConfig("optimizer state does not match parameters".into()));
    }
    for id in ids {
        if freeze.is_frozen(id) {
            continue;
        }
        let g = grads.get(id);
        if g.len() != params.get(id).len() || state.m.get(id).len() != g.len() {
            return Err(Error::LengthMismatch {
                op: "adam_step",
                expected: params.get(id).len(),
                found: g.len(),
            });
        }
        let t = state.steps.entry(id).or_insert(0);
        *t += 1;
        let bc1 = 1.0 - libm::pow(cfg.beta1 as f64, *t as f64);
        let bc2 = 1.0 - libm::pow(cfg.beta2 as f64, *t as f64);
        let step = (lr as f64 / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
        let m = state.m.get_mut(id);
        let v = state.v.get_mut(id);
        let p = params.get_mut(id);
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= step * m[i] / (libm::sqrtf(v[i] * inv_bc2) + eps);
        }
    }
    Ok(())
}
