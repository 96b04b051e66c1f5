use alloc::format;
use alloc::vec::Vec;

use super::ModelConfig;
use crate::{Error, Result};

/// A batch of equal-length token sequences, stored row-major
/// (`sequence * seq_len + position`).
///
/// `attention[i]` is false for padding keys. `labels[i]` is the target id at
/// position `i`: the original token at masked positions for MLM, the next
/// token for causal LM, `None` where no loss is taken.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub ids: Vec<u32>,
    pub attention: Vec<bool>,
    pub labels: Vec<Option<u32>>,
}

impl Batch {
    pub fn new(
        batch_size: usize,
        seq_len: usize,
        ids: Vec<u32>,
        attention: Vec<bool>,
        labels: Vec<Option<u32>>,
    ) -> Result<Self> {
        let n = batch_size * seq_len;
        for (what, len) in [("ids", ids.len()), ("attention", attention.len()), ("labels", labels.len())] {
            if len != n {
                return Err(Error::InvalidConfig(format!(
                    "batch {what}: length {len}, expected {batch_size} x {seq_len}"
                )));
            }
        }
        Ok(Self {
            batch_size,
            seq_len,
            ids,
            attention,
            labels,
        })
    }

    /// Unlabeled batch with full attention.
    pub fn unlabeled(batch_size: usize, seq_len: usize, ids: Vec<u32>) -> Result<Self> {
        let n = batch_size * seq_len;
        Self::new(batch_size, seq_len, ids, alloc::vec![true; n], alloc::vec![None; n])
    }

    /// Next-token batch from windows of `seq_len + 1` tokens each.
    pub fn causal_from_windows(windows: &[&[u32]]) -> Result<Self> {
        let Some(first) = windows.first() else {
            return Err(Error::InvalidConfig("empty batch".into()));
        };
        if first.len() < 2 {
            return Err(Error::WindowTooShort(first.len()));
        }
        let seq_len = first.len() - 1;
        let mut ids = Vec::with_capacity(windows.len() * seq_len);
        let mut labels = Vec::with_capacity(windows.len() * seq_len);
        for w in windows {
            if w.len() != seq_len + 1 {
                return Err(Error::InvalidConfig("ragged causal windows".into()));
            }
            ids.extend_from_slice(&w[..seq_len]);
            labels.extend(w[1..].iter().map(|&t| Some(t)));
        }
        let n = ids.len();
        Self::new(windows.len(), seq_len, ids, alloc::vec![true; n], labels)
    }

    pub fn sequence(&self, b: usize) -> SequenceView<'_> {
        let r = b * self.seq_len..(b + 1) * self.seq_len;
        SequenceView {
            ids: &self.ids[r.clone()],
            attention: &self.attention[r.clone()],
            labels: &self.labels[r],
        }
    }

    pub fn label_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.seq_len > config.max_seq {
            return Err(Error::SequenceTooLong {
                len: self.seq_len,
                max: config.max_seq,
            });
        }
        for &id in self.ids.iter().chain(self.labels.iter().flatten()) {
            if id as usize >= config.vocab {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab: config.vocab,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SequenceView<'a> {
    pub ids: &'a [u32],
    pub attention: &'a [bool],
    pub labels: &'a [Option<u32>],
}
