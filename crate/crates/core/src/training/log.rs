use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    /// Sampled sub-model, top `l_b` layers trained.
    Sub,
    Full,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Sub => "sub",
            Stage::Full => "full",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sub" => Ok(Stage::Sub),
            "full" => Ok(Stage::Full),
            other => Err(Error::InvalidConfig(format!("unknown stage {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub stage: Stage,
    pub sub_depth: usize,
    pub loss: f64,
    pub lr: f32,
    /// Cumulative estimate up to and including this step.
    pub flops: f64,
}

/// Per-step training records with strictly increasing steps and finite
/// losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    records: Vec<LossRecord>,
}

impl LossLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: LossRecord) -> Result<()> {
        if !r.loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: r.step });
        }
        if let Some(last) = self.records.last() {
            if r.step <= last.step {
                return Err(Error::InvalidConfig(format!("step {} after {}", r.step, last.step)));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn records(&self) -> &[LossRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&LossRecord> {
        self.records.last()
    }

    /// Trailing moving average of the loss over `window` records (shorter at
    /// the start), one value per record.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        (0..self.records.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                self.records[lo..=i].iter().map(|r| r.loss).sum::<f64>() / (i + 1 - lo) as f64
            })
            .collect()
    }

    /// Mean of the last `window` losses.
    pub fn final_average(&self, window: usize) -> Option<f64> {
        let n = self.records.len();
        if n == 0 {
            return None;
        }
        let w = window.clamp(1, n);
        Some(self.records[n - w..].iter().map(|r| r.loss).sum::<f64>() / w as f64)
    }
}

/// First step whose moving-average loss (over a full window) is at or below
/// `threshold`; `None` if it never gets there.
pub fn steps_to_threshold(log: &LossLog, threshold: f64, window: usize) -> Option<usize> {
    let w = window.max(1);
    log.moving_average(w)
        .iter()
        .zip(log.records())
        .enumerate()
        .find(|&(i, (&avg, _))| i + 1 >= w && avg <= threshold)
        .map(|(_, (_, r))| r.step)
}
