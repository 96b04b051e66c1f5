use alloc::vec::Vec;

use super::corpus::{MASK, NUM_SPECIAL, PAD};
use crate::numerics::SeededRng;
use crate::transformer::Batch;
use crate::{Error, Result};

pub const DEFAULT_MASK_RATIO: f32 = 0.15;

/// Masked positions per sequence: `⌊len · ratio⌋` of the non-PAD tokens,
/// but at least one so every sequence contributes to the loss.
pub fn mask_count(non_pad: usize, ratio: f32) -> usize {
    if non_pad == 0 {
        return 0;
    }
    ((non_pad as f64 * ratio as f64) as usize).clamp(1, non_pad)
}

/// MLM batch from equal-length windows. Selected positions become MASK 80% of
/// the time, a random non-special id 10%, and stay unchanged 10%; labels hold
/// the original ids. PAD positions are never selected and are excluded from
/// attention.
pub fn mask_batch(windows: &[&[u32]], mask_ratio: f32, vocab: usize, rng: &mut SeededRng) -> Result<Batch> {
    if !(mask_ratio > 0.0 && mask_ratio < 1.0) {
        return Err(Error::InvalidMaskRatio(mask_ratio));
    }
    let Some(first) = windows.first() else {
        return Err(Error::InvalidConfig("empty batch".into()));
    };
    let seq_len = first.len();
    if seq_len < 2 {
        return Err(Error::WindowTooShort(seq_len));
    }
    if vocab <= NUM_SPECIAL as usize {
        return Err(Error::InvalidConfig(alloc::format!("vocab must exceed {NUM_SPECIAL}")));
    }
    let n = windows.len() * seq_len;
    let mut ids = Vec::with_capacity(n);
    let mut attention = Vec::with_capacity(n);
    let mut labels = alloc::vec![None; n];
    let ordinary = vocab - NUM_SPECIAL as usize;
    for (b, w) in windows.iter().enumerate() {
        if w.len() != seq_len {
            return Err(Error::InvalidConfig("ragged windows".into()));
        }
        let base = b * seq_len;
        ids.extend_from_slice(w);
        attention.extend(w.iter().map(|&t| t != PAD));
        let mut candidates: Vec<usize> = (0..seq_len).filter(|&i| w[i] != PAD).collect();
        rng.shuffle(&mut candidates);
        candidates.truncate(mask_count(candidates.len(), mask_ratio));
        candidates.sort_unstable();
        for i in candidates {
            labels[base + i] = Some(w[i]);
            let u = rng.uniform();
            if u < 0.8 {
                ids[base + i] = MASK;
            } else if u < 0.9 {
                ids[base + i] = NUM_SPECIAL + rng.sample_index(ordinary)? as u32;
            }
        }
    }
    Batch::new(windows.len(), seq_len, ids, attention, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(mask_count(100, 0.15), 15);
        assert_eq!(mask_count(6, 0.15), 1);
        assert_eq!(mask_count(0, 0.15), 0);
    }

    #[test]
    fn never_masks_padding() {
        let w: Vec<u32> = [5, 6, 7, 8, 0, 0, 0, 0].to_vec();
        let mut rng = SeededRng::new(1);
        for _ in 0..200 {
            let b = mask_batch(&[&w], 0.5, 10, &mut rng).unwrap();
            assert_eq!(b.label_count(), 2);
            for i in 4..8 {
                assert_eq!(b.labels[i], None);
                assert!(!b.attention[i]);
                assert_eq!(b.ids[i], PAD);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let w = [5u32, 6, 7];
        let mut rng = SeededRng::new(1);
        assert_eq!(mask_batch(&[&w], 0.0, 10, &mut rng), Err(Error::InvalidMaskRatio(0.0)));
        assert_eq!(mask_batch(&[&w[..1]], 0.2, 10, &mut rng), Err(Error::WindowTooShort(1)));
    }
}
