use alloc::format;
use alloc::vec::Vec;

use super::masking::DEFAULT_MASK_RATIO;
use crate::numerics::SeededRng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer and schedule settings for one training run.
///
/// An epoch is `steps_per_epoch` optimizer steps; the run lasts
/// `epochs * steps_per_epoch` steps, of which the first
/// `submodel_epochs * steps_per_epoch` train sampled sub-models.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainSchedule {
    pub peak_lr: f32,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// `E_b`; zero disables the sub-model stage.
    pub submodel_epochs: usize,
    /// `l_b`: sub-model depth increment and number of layers trained per
    /// stage-1 step.
    pub layer_step: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub mask_ratio: f32,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            peak_lr: 1e-3,
            warmup_steps: 100,
            epochs: 10,
            steps_per_epoch: 100,
            submodel_epochs: 0,
            layer_step: 1,
            batch_size: 32,
            seq_len: 32,
            mask_ratio: DEFAULT_MASK_RATIO,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn stage1_steps(&self) -> usize {
        self.submodel_epochs * self.steps_per_epoch
    }

    /// Fits `total` steps into `epochs` epochs (rounding the epoch length up).
    pub fn with_total_steps(mut self, total: usize) -> Self {
        let e = self.epochs.max(1);
        self.steps_per_epoch = total.div_ceil(e);
        self
    }

    pub fn validate(&self, layers: usize) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidSchedule(m));
        if !(self.peak_lr.is_finite() && self.peak_lr >= 0.0) {
            return bad(format!("peak_lr must be finite and >= 0, got {}", self.peak_lr));
        }
        if self.total_steps() == 0 {
            return bad("no training steps".into());
        }
        if self.submodel_epochs > self.epochs {
            return bad(format!("E_b = {} exceeds E = {}", self.submodel_epochs, self.epochs));
        }
        if self.layer_step < 1 || self.layer_step > layers {
            return bad(format!("l_b = {} must be in 1..={layers}", self.layer_step));
        }
        if self.batch_size == 0 || self.seq_len < 2 {
            return bad(format!("batch {} x seq {} too small", self.batch_size, self.seq_len));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::InvalidMaskRatio(self.mask_ratio));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to the peak, then linear decay to 0 at the final
/// step.
pub fn lr_at(schedule: &TrainSchedule, step: usize) -> f32 {
    let total = schedule.total_steps();
    let warm = schedule.warmup_steps;
    let peak = schedule.peak_lr as f64;
    let lr = if step < warm {
        peak * step as f64 / warm as f64
    } else if step >= total {
        0.0
    } else {
        peak * (total - step) as f64 / (total - warm) as f64
    };
    lr as f32
}

/// Depths `l_b, 2·l_b, …` up to and always ending at `L^t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubModelFamily {
    depths: Vec<usize>,
}

impl SubModelFamily {
    pub fn new(layers: usize, layer_step: usize) -> Result<Self> {
        if layer_step == 0 || layer_step > layers {
            return Err(Error::InvalidSchedule(format!("l_b = {layer_step} must be in 1..={layers}")));
        }
        let mut depths: Vec<usize> = (1..).map(|k| k * layer_step).take_while(|&d| d < layers).collect();
        depths.push(layers);
        Ok(Self { depths })
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        self.depths[rng.sample_index(self.depths.len()).expect("family is non-empty")]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_shape() {
        let s = TrainSchedule {
            peak_lr: 1e-3,
            warmup_steps: 10,
            epochs: 1,
            steps_per_epoch: 110,
            ..Default::default()
        };
        assert_eq!(lr_at(&s, 0), 0.0);
        assert_eq!(lr_at(&s, 10), 1e-3);
        assert!((lr_at(&s, 60) - 5e-4).abs() < 1e-9);
        assert!((lr_at(&s, 5) - 5e-4).abs() < 1e-9);
        assert_eq!(lr_at(&s, 110), 0.0);
        assert_eq!(lr_at(&s, 500), 0.0);
        let no_warm = TrainSchedule { warmup_steps: 0, ..s };
        assert_eq!(lr_at(&no_warm, 0), 1e-3);
    }

    #[test]
    fn families() {
        assert_eq!(SubModelFamily::new(12, 3).unwrap().depths(), [3, 6, 9, 12]);
        assert_eq!(SubModelFamily::new(10, 3).unwrap().depths(), [3, 6, 9, 10]);
        assert_eq!(SubModelFamily::new(4, 4).unwrap().depths(), [4]);
        assert!(SubModelFamily::new(4, 5).is_err());
        assert!(SubModelFamily::new(4, 0).is_err());
    }

    #[test]
    fn validation() {
        let s = TrainSchedule::default();
        s.validate(4).unwrap();
        assert!(TrainSchedule { submodel_epochs: 11, ..s }.validate(4).is_err());
        assert!(TrainSchedule { layer_step: 5, ..s }.validate(4).is_err());
        assert_eq!(s.with_total_steps(1001).steps_per_epoch, 101);
    }
}
