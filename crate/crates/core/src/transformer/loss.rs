use super::{Batch, ModelConfig, Variant};
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Cross-entropy of one logit row against `label`, accumulated in `f64`.
pub fn row_cross_entropy(row: &[f32], label: u32) -> f64 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = row.iter().map(|&v| libm::exp(v as f64 - max)).sum();
    max + libm::log(sum) - row[label as usize] as f64
}

fn mean_labeled_ce(logits: &Matrix, batch: &Batch) -> Result<f64> {
    if logits.rows() != batch.labels.len() {
        return Err(Error::LengthMismatch {
            op: "loss",
            expected: batch.labels.len(),
            found: logits.rows(),
        });
    }
    let mut total = 0.0f64;
    let mut n = 0usize;
    for (r, label) in batch.labels.iter().enumerate() {
        if let Some(label) = *label {
            if label as usize >= logits.cols() {
                return Err(Error::TokenOutOfRange {
                    id: label,
                    vocab: logits.cols(),
                });
            }
            total += row_cross_entropy(logits.row(r), label);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoLabels);
    }
    Ok(total / n as f64)
}

/// Mean cross-entropy over the masked (labeled) positions.
pub fn mlm_loss(logits: &Matrix, batch: &Batch) -> Result<f64> {
    mean_labeled_ce(logits, batch)
}

/// Mean next-token cross-entropy; `exp` of it is the perplexity.
pub fn lm_loss(config: &ModelConfig, logits: &Matrix, batch: &Batch) -> Result<f64> {
    if config.variant != Variant::PreLnDecoder {
        return Err(Error::WrongVariant {
            expected: Variant::PreLnDecoder.as_str(),
        });
    }
    mean_labeled_ce(logits, batch)
}

/// The variant's own objective.
pub fn loss(config: &ModelConfig, logits: &Matrix, batch: &Batch) -> Result<f64> {
    match config.variant {
        Variant::PostLnEncoder => mlm_loss(logits, batch),
        Variant::PreLnDecoder => lm_loss(config, logits, batch),
    }
}
