use alloc::vec::Vec;
use core::ops::ControlFlow;

use super::{adam_step, lr_at, mask_batch, AdamState, Corpus, LossLog, LossRecord, Stage, SubModelFamily, TrainSchedule};
use crate::numerics::SeededRng;
use crate::transformer::{backward_with, forward, loss, BackwardOptions, Batch, FreezeSet, Gradients, ModelConfig, ParamSet};
use crate::{Error, Result};

/// Computes mean-loss gradients for one batch. Implementations must be
/// deterministic: same inputs, bitwise-same output.
pub trait GradientBackend {
    fn gradients(
        &self,
        config: &ModelConfig,
        params: &ParamSet,
        batch: &Batch,
        opts: BackwardOptions<'_>,
    ) -> Result<Gradients>;
}

/// Single-threaded backend.
#[derive(Clone, Copy, Debug, Default)]
pub struct SerialBackend;

impl GradientBackend for SerialBackend {
    fn gradients(
        &self,
        config: &ModelConfig,
        params: &ParamSet,
        batch: &Batch,
        opts: BackwardOptions<'_>,
    ) -> Result<Gradients> {
        backward_with(config, params, batch, opts)
    }
}

impl<B: GradientBackend + ?Sized> GradientBackend for &B {
    fn gradients(
        &self,
        config: &ModelConfig,
        params: &ParamSet,
        batch: &Batch,
        opts: BackwardOptions<'_>,
    ) -> Result<Gradients> {
        (**self).gradients(config, params, batch, opts)
    }
}

/// One training batch for the variant's objective: masked windows of
/// `seq_len` for the encoder, shifted windows of `seq_len + 1` for the
/// decoder.
pub fn make_batch(
    config: &ModelConfig,
    corpus: &Corpus,
    batch_size: usize,
    seq_len: usize,
    mask_ratio: f32,
    rng: &mut SeededRng,
) -> Result<Batch> {
    if corpus.vocab != config.vocab {
        return Err(Error::VocabMismatch(corpus.vocab, config.vocab));
    }
    if config.variant.is_causal() {
        let windows = corpus.sample_windows(batch_size, seq_len + 1, rng)?;
        Batch::causal_from_windows(&windows)
    } else {
        let windows: Vec<&[u32]> = corpus.sample_windows(batch_size, seq_len, rng)?;
        mask_batch(&windows, mask_ratio, config.vocab, rng)
    }
}

/// Label-weighted mean loss over `n_batches` batches drawn with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_corpus(
    config: &ModelConfig,
    params: &ParamSet,
    corpus: &Corpus,
    n_batches: usize,
    batch_size: usize,
    seq_len: usize,
    mask_ratio: f32,
    seed: u64,
) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let (mut total, mut n) = (0.0f64, 0usize);
    for _ in 0..n_batches {
        let batch = make_batch(config, corpus, batch_size, seq_len, mask_ratio, &mut rng)?;
        let out = forward(config, params, &batch)?;
        let k = batch.label_count();
        total += loss(config, &out.logits, &batch)? * k as f64;
        n += k;
    }
    if n == 0 {
        return Err(Error::NoLabels);
    }
    Ok(total / n as f64)
}

/// Training FLOPs of one step: `6 × active parameters × tokens`. In stage 1
/// only the sampled sub-model counts.
pub fn step_flops(config: &ModelConfig, depth: usize, tokens: usize) -> f64 {
    let shell = config.param_count() - config.layers * config.per_layer_param_count();
    let active = shell + depth * config.per_layer_param_count();
    6.0 * active as f64 * tokens as f64
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub optimizer: AdamState,
    pub log: LossLog,
    /// `true` when the step callback asked to stop before the last step.
    pub stopped_early: bool,
}

/// Trains with the two-stage schedule.
///
/// For the first `E_b` epochs every step draws a depth from the sub-model
/// family, runs the bottom layers with the shared head, and updates only the
/// top `l_b` layers of that sub-model plus the head; embeddings, lower layers
/// and the final norm stay frozen. The remaining steps update everything.
/// `on_step` sees every record and the parameters after that step, and can
/// end the run early.
pub fn two_stage_train<B: GradientBackend>(
    config: &ModelConfig,
    params: ParamSet,
    schedule: &TrainSchedule,
    corpus: &Corpus,
    backend: B,
    mut on_step: impl FnMut(&LossRecord, &ParamSet) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    schedule.validate(config.layers)?;
    params.validate(config)?;
    corpus.validate()?;
    if schedule.seq_len > config.max_seq {
        return Err(Error::SequenceTooLong {
            len: schedule.seq_len,
            max: config.max_seq,
        });
    }
    let family = SubModelFamily::new(config.layers, schedule.layer_step)?;
    let root = SeededRng::new(schedule.seed);
    let mut data_rng = root.derive(1);
    let mut depth_rng = root.derive(2);
    let mut params = params;
    let mut adam = AdamState::new(config);
    let mut log = LossLog::new();
    let full = FreezeSet::none();
    let total = schedule.total_steps();
    let stage1 = schedule.stage1_steps();
    let tokens = schedule.batch_size * schedule.seq_len;
    let mut flops = 0.0f64;
    let mut stopped_early = false;

    for step in 1..=total {
        let batch = make_batch(
            config,
            corpus,
            schedule.batch_size,
            schedule.seq_len,
            schedule.mask_ratio,
            &mut data_rng,
        )?;
        let (stage, depth, sub_freeze) = if step <= stage1 {
            let d = family.sample(&mut depth_rng);
            (Stage::Sub, d, Some(FreezeSet::train_top_layers(config.layers, d, schedule.layer_step)))
        } else {
            (Stage::Full, config.layers, None)
        };
        let freeze = sub_freeze.as_ref().unwrap_or(&full);
        let g = backend.gradients(
            config,
            &params,
            &batch,
            BackwardOptions {
                freeze,
                depth,
                loss_scale: 1.0,
            },
        )?;
        if !g.loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let lr = lr_at(schedule, step);
        adam_step(&mut params, &g.grads, &mut adam, lr, &schedule.adam, freeze)?;
        flops += step_flops(config, depth, tokens);
        let record = LossRecord {
            step,
            stage,
            sub_depth: depth,
            loss: g.loss,
            lr,
            flops,
        };
        log.push(record)?;
        if on_step(&record, &params).is_break() {
            stopped_early = step < total;
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        optimizer: adam,
        log,
        stopped_early,
    })
}
