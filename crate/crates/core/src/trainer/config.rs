use std::path::Path;

use serde::{Deserialize, Serialize};
use tempcycle_autograd::AdamConfig;

use crate::data::DEFAULT_LOAD_SIZE;
use crate::error::{io_err, Error, Result};
use crate::losses::LossWeights;

/// Training hyperparameters. Parsed from a flat TOML file; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Cycle-consistency weight.
    pub lambda: f64,
    /// Temporal matching weight.
    pub mu: f64,
    /// Identity-mapping weight; 0 disables it.
    pub identity_weight: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Side of the square training crop.
    pub image_size: usize,
    /// Side frames are resized to before cropping; derived from `image_size` when absent.
    pub load_size: Option<usize>,
    pub width_multiplier: f64,
    pub residual_blocks: usize,
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub buffer_capacity: usize,
    /// Distance between triplet starts in domain X videos.
    pub stride_x: usize,
    /// Distance between triplet starts in domain Y videos.
    pub stride_y: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            mu: 10.0,
            identity_weight: 0.0,
            learning_rate: 1e-4,
            batch_size: 1,
            epochs: 60,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            image_size: 256,
            load_size: None,
            width_multiplier: 1.0,
            residual_blocks: 8,
            seed: 0,
            checkpoint_every: 0,
            buffer_capacity: 50,
            stride_x: 120,
            stride_y: 240,
        }
    }
}

impl TrainConfig {
    /// Small, fast settings for CI and local checks.
    pub fn smoke() -> Self {
        Self {
            image_size: 32,
            width_multiplier: 0.25,
            epochs: 2,
            stride_x: 4,
            stride_y: 4,
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::default().overlay_toml(s)
    }

    /// Keys present in `s` replace the corresponding fields of `self`.
    pub fn overlay_toml(&self, s: &str) -> Result<Self> {
        let config_err = |e: toml::de::Error| Error::Config(e.message().trim().to_string());
        let overrides: toml::Table = toml::from_str(s).map_err(config_err)?;
        let mut table = toml::Table::try_from(self).expect("config serializes");
        table.extend(overrides);
        let cfg: Self = table.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::default().overlay_file(path)
    }

    pub fn overlay_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        self.overlay_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Resize target; scales the usual 286-for-256 margin to other crop sizes.
    pub fn effective_load_size(&self) -> usize {
        self.load_size.unwrap_or_else(|| {
            (self.image_size as f64 * DEFAULT_LOAD_SIZE as f64 / 256.0).round() as usize
        })
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            mu: self.mu,
            identity: self.identity_weight,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_pos(self.learning_rate) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !finite_pos(self.eps) {
            return fail(format!("eps must be > 0, got {}", self.eps));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("identity_weight", self.identity_weight),
        ] {
            if !finite_nonneg(v) {
                return fail(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !finite_pos(self.width_multiplier) {
            return fail(format!("width_multiplier must be > 0, got {}", self.width_multiplier));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.image_size < 8 || self.image_size % 4 != 0 {
            return fail(format!(
                "image_size must be >= 8 and divisible by 4, got {}",
                self.image_size
            ));
        }
        if self.effective_load_size() < self.image_size {
            return fail(format!(
                "load_size {} is smaller than image_size {}",
                self.effective_load_size(),
                self.image_size
            ));
        }
        if self.buffer_capacity == 0 {
            return fail("buffer_capacity must be >= 1".into());
        }
        if self.stride_x == 0 || self.stride_y == 0 {
            return fail("stride_x and stride_y must be >= 1".into());
        }
        Ok(())
    }
}
