use alloc::vec::Vec;

use crate::numerics::SeededRng;
use crate::transformer::{forward, loss, Batch, ModelConfig, ParamSet};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Number of random input sequences.
    pub n_inputs: usize,
    /// Tokens per sequence; clipped to both models' `max_seq`.
    pub seq_len: usize,
    pub seed: u64,
    /// Pass threshold on the maximum absolute logit difference.
    pub tol: f32,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_inputs: 100,
            seq_len: 16,
            seed: 0,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreservationReport {
    pub max_logit_gap: f32,
    pub source_loss: f64,
    pub target_loss: f64,
    pub passed: bool,
}

impl PreservationReport {
    pub fn loss_gap(&self) -> f64 {
        (self.target_loss - self.source_loss).abs()
    }

    pub fn relative_loss_gap(&self) -> f64 {
        self.loss_gap() / self.source_loss.abs().max(f64::MIN_POSITIVE)
    }
}

/// Random sequences labeled for the variant's objective: every position
/// carries its own token (encoder) or the next token (decoder).
pub fn random_eval_batch(config: &ModelConfig, n: usize, seq_len: usize, seed: u64) -> Result<Batch> {
    let mut rng = SeededRng::new(seed);
    let v = config.vocab;
    if config.variant.is_causal() {
        let windows: Vec<Vec<u32>> = (0..n)
            .map(|_| (0..=seq_len).map(|_| rng.sample_index(v).map(|x| x as u32)).collect())
            .collect::<Result<_>>()?;
        let refs: Vec<&[u32]> = windows.iter().map(Vec::as_slice).collect();
        Batch::causal_from_windows(&refs)
    } else {
        let ids: Vec<u32> = (0..n * seq_len)
            .map(|_| rng.sample_index(v).map(|x| x as u32))
            .collect::<Result<_>>()?;
        let labels = ids.iter().map(|&t| Some(t)).collect();
        Batch::new(n, seq_len, ids, alloc::vec![true; n * seq_len], labels)
    }
}

/// Compares two models on the same batches.
pub fn verify_on_batches(
    source_config: &ModelConfig,
    source: &ParamSet,
    target_config: &ModelConfig,
    target: &ParamSet,
    batches: &[Batch],
    tol: f32,
) -> Result<PreservationReport> {
    if source_config.vocab != target_config.vocab {
        return Err(Error::VocabMismatch(source_config.vocab, target_config.vocab));
    }
    let mut gap = 0.0f32;
    let (mut ls, mut lt, mut weight) = (0.0f64, 0.0f64, 0usize);
    for b in batches {
        let a = forward(source_config, source, b)?;
        let c = forward(target_config, target, b)?;
        gap = gap.max(a.logits.max_abs_diff(&c.logits));
        let n = b.label_count();
        if n > 0 {
            ls += loss(source_config, &a.logits, b)? * n as f64;
            lt += loss(target_config, &c.logits, b)? * n as f64;
            weight += n;
        }
    }
    if weight == 0 {
        return Err(Error::NoLabels);
    }
    Ok(PreservationReport {
        max_logit_gap: gap,
        source_loss: ls / weight as f64,
        target_loss: lt / weight as f64,
        passed: gap <= tol,
    })
}

/// Runs `n_inputs` random sequences through both models and reports the
/// largest logit difference and the eval-loss difference.
pub fn verify_preservation(
    source_config: &ModelConfig,
    source: &ParamSet,
    target_config: &ModelConfig,
    target: &ParamSet,
    opts: &VerifyOptions,
) -> Result<PreservationReport> {
    if source_config.vocab != target_config.vocab {
        return Err(Error::VocabMismatch(source_config.vocab, target_config.vocab));
    }
    let seq_len = opts.seq_len.min(source_config.max_seq).min(target_config.max_seq).max(1);
    let batch = random_eval_batch(source_config, opts.n_inputs.max(1), seq_len, opts.seed)?;
    verify_on_batches(source_config, source, target_config, target, &[batch], opts.tol)
}
