//! Run configuration, loaded from JSON over built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{MeasureConfig, DEFAULT_BINS, DEFAULT_KL_SMOOTHING};
use crate::stats::{Grouping, ModelFilter, DEFAULT_LEVEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_bins: usize,
    /// Expected number of MC samples per tensor; a mismatch is reported.
    pub expected_samples: usize,
    pub kl_smoothing: f64,
    pub credible_level: f64,
    pub grouping: Grouping,
    pub top: Option<usize>,
    pub min_dice: Option<f64>,
    pub class_names: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_bins: DEFAULT_BINS,
            expected_samples: 50,
            kl_smoothing: DEFAULT_KL_SMOOTHING,
            credible_level: DEFAULT_LEVEL,
            grouping: Grouping::Model,
            top: None,
            min_dice: None,
            class_names: vec!["background".into(), "vessel_wall".into(), "lumen".into()],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::Config(format!("n_bins must be >= 2, got {}", self.n_bins)));
        }
        if !(self.credible_level > 0.0 && self.credible_level < 1.0) {
            return Err(Error::Config(format!(
                "credible_level must be in (0, 1), got {}",
                self.credible_level
            )));
        }
        if !(self.kl_smoothing > 0.0 && self.kl_smoothing.is_finite()) {
            return Err(Error::Config(format!(
                "kl_smoothing must be positive, got {}",
                self.kl_smoothing
            )));
        }
        if self.top == Some(0) {
            return Err(Error::Config("top must be at least 1".into()));
        }
        if self.class_names.len() < 2 {
            return Err(Error::Config("class_names needs at least two entries".into()));
        }
        Ok(())
    }

    pub fn measure(&self) -> MeasureConfig {
        MeasureConfig {
            n_bins: self.n_bins,
            kl_smoothing: self.kl_smoothing,
        }
    }

    pub fn model_filter(&self) -> ModelFilter {
        ModelFilter {
            top: self.top,
            min_dice: self.min_dice,
        }
    }
}
