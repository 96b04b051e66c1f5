//! Width and depth expansion of a trained model.
//!
//! Width grows by adding attention heads of unchanged size and FFN units.
//! Every target coordinate is mapped onto a source coordinate by a
//! [`MappingFn`]; an [`ExpansionPlan`] ties those mappings together so that
//! each matrix's out-mapping equals its consumer's in-mapping. Depth grows by
//! stacking the widened layers.

mod baselines;
mod depth;
mod expn;
mod mapping;
mod plan;
mod verify;
mod widen;

pub use baselines::{direct_copy, has_corner, rand_init};
pub use depth::{depth_stack, stack_order};
pub use expn::{expand_bias, expand_in, expand_out, expn, expn_with_upper};
pub use mapping::{build_mapping, MappingFn};
pub use plan::{build_plan, ExpansionPlan, Port, Sampling, SourceTargetPair, Strategy, UpperMapping};
pub use verify::{random_eval_batch, verify_on_batches, verify_preservation, PreservationReport, VerifyOptions};
pub use widen::{aki_expand, fpi_expand};

use crate::transformer::{ModelConfig, ParamSet};
use crate::Result;

/// Result of [`grow`].
#[derive(Clone, Debug)]
pub struct Grown {
    pub config: ModelConfig,
    pub params: ParamSet,
    /// FPI/AKI only.
    pub plan: Option<ExpansionPlan>,
    /// FPI/AKI only: the width-expanded model before depth stacking.
    pub widened: Option<ParamSet>,
}

/// Initializes the target of `pair` with `strategy`: width expansion then
/// depth stacking for FPI and AKI, the baselines otherwise.
pub fn grow(pair: &SourceTargetPair<'_>, strategy: Strategy, sampling: Sampling, seed: u64) -> Result<Grown> {
    pair.validate()?;
    let config = *pair.target;
    match strategy {
        Strategy::Fpi | Strategy::Aki => {
            let plan = build_plan(pair, strategy, sampling, seed)?;
            let widened = match strategy {
                Strategy::Fpi => fpi_expand(pair, &plan)?,
                _ => aki_expand(pair, &plan)?,
            };
            let params = depth_stack(&widened, config.layers)?;
            Ok(Grown {
                config,
                params,
                plan: Some(plan),
                widened: Some(widened),
            })
        }
        Strategy::DirectCopy => Ok(Grown {
            config,
            params: direct_copy(pair, seed)?,
            plan: None,
            widened: None,
        }),
        Strategy::Rand => Ok(Grown {
            config,
            params: rand_init(&config, seed)?,
            plan: None,
            widened: None,
        }),
    }
}
