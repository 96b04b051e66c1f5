//! Desk-scale pre-training: synthetic corpora, MLM masking, Adam with linear
//! warmup/decay, and the two-stage sub-model schedule.

mod adam;
mod corpus;
mod log;
mod masking;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use corpus::{Corpus, MarkovChain, BYTE_VOCAB, CLS, MASK, NUM_SPECIAL, PAD, SEP};
pub use log::{steps_to_threshold, LossLog, LossRecord, Stage};
pub use masking::{mask_batch, mask_count, DEFAULT_MASK_RATIO};
pub use schedule::{lr_at, AdamConfig, SubModelFamily, TrainSchedule};
pub use trainer::{
    evaluate_corpus, make_batch, step_flops, two_stage_train, GradientBackend, SerialBackend, TrainOutcome,
};
