//! Multi-threaded gradient computation.

use growformer_core::training::GradientBackend;
use growformer_core::transformer::{backward_with, check_inputs, combine, sequence_gradient, BackwardOptions, Gradients};
use growformer_core::{Batch, ModelConfig, ParamSet, Result};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "GROWFORMER_THREADS";

/// Thread cap from `GROWFORMER_THREADS`; `None` when unset or invalid.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Computes per-sequence gradients on a rayon pool and sums them in
/// sequence order, so the result is bitwise identical to the serial backend
/// for any thread count.
pub struct ParallelBackend {
    pool: rayon::ThreadPool,
}

impl ParallelBackend {
    pub fn new(threads: Option<usize>) -> std::result::Result<Self, rayon::ThreadPoolBuildError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        Ok(Self { pool: b.build()? })
    }

    /// Pool sized by `GROWFORMER_THREADS` (rayon's default when unset).
    pub fn from_env() -> std::result::Result<Self, rayon::ThreadPoolBuildError> {
        Self::new(thread_cap())
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl GradientBackend for ParallelBackend {
    fn gradients(
        &self,
        config: &ModelConfig,
        params: &ParamSet,
        batch: &Batch,
        opts: BackwardOptions<'_>,
    ) -> Result<Gradients> {
        if self.threads() <= 1 {
            return backward_with(config, params, batch, opts);
        }
        check_inputs(config, params, batch, opts.depth)?;
        let parts: Vec<_> = self.pool.install(|| {
            (0..batch.batch_size)
                .into_par_iter()
                .map(|b| sequence_gradient(config, params, batch.sequence(b), opts))
                .collect()
        });
        combine(parts, opts.loss_scale)
    }
}
