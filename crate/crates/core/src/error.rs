use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{op}: length mismatch, expected {expected}, found {found}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("cannot sample from an empty range")]
    EmptyRange,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("sequence length {len} exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("batch carries no labeled positions")]
    NoLabels,
    #[error("operation requires the {expected} variant")]
    WrongVariant { expected: &'static str },
    #[error("invalid mapping: {0}")]
    InvalidMapping(String),
    #[error("incompatible head geometry: {0}")]
    IncompatibleGeometry(String),
    #[error("advanced knowledge initialization needs at least two source layers")]
    NoUpperLayer,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("window of length {0} is too short to mask")]
    WindowTooShort(usize),
    #[error("mask ratio {0} outside (0, 1)")]
    InvalidMaskRatio(f32),
    #[error("corpus is too short: {0}")]
    CorpusTooShort(String),
    #[error("vocabulary mismatch: {0} vs {1}")]
    VocabMismatch(usize, usize),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
}
