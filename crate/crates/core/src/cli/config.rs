use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::HeadPolicy;
use crate::data::{AugmentSpec, BatchSpec, Normalization, DEFAULT_TEST_FRACTION};
use crate::error::{Error, Result};
use crate::nn::ResNetConfig;
use crate::train::{FitConfig, Policy, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// 34-layer network for 224x224 inputs.
    Resnet34,
    /// Three single-block stages for small inputs.
    Compact,
}

impl Arch {
    pub fn config(self, num_classes: usize) -> ResNetConfig {
        match self {
            Arch::Resnet34 => ResNetConfig::resnet34(num_classes),
            Arch::Compact => ResNetConfig::compact(num_classes),
        }
    }
}

/// Everything a run depends on. Loaded from an optional TOML file, then
/// overridden by flags; the resolved value is logged verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub labels: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Weights to start from; absent means training from scratch.
    pub pretrained: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    pub arch: Arch,
    pub test_fraction: f64,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub policy: Policy,
    pub momentum: f64,
    pub weight_decay: f64,
    pub backbone_lr_ratio: f64,
    pub seed: u64,
    pub resolution: usize,
    pub augment: bool,
    /// Apply the pretraining corpus channel statistics; otherwise pixels stay in [0, 1].
    pub normalize: bool,
    pub head: HeadPolicy,
    pub relaxed_import: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            labels: None,
            images: None,
            split: None,
            checkpoint: None,
            pretrained: None,
            report: None,
            out_dir: None,
            arch: Arch::Resnet34,
            test_fraction: DEFAULT_TEST_FRACTION,
            phase1_epochs: 1,
            phase2_epochs: 4,
            batch_size: 16,
            max_lr: 1e-2,
            policy: Policy::OneCycle,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            backbone_lr_ratio: 0.1,
            seed: 0,
            resolution: 224,
            augment: true,
            normalize: true,
            head: HeadPolicy::Skip,
            relaxed_import: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config file: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config is always serializable")
    }

    /// Checks numeric ranges; violations are usage errors.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(format!("--fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.batch_size == 0 {
            return Err("--batch-size must be positive".into());
        }
        if self.resolution == 0 {
            return Err("--resolution must be positive".into());
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(format!("--max-lr must be positive, got {}", self.max_lr));
        }
        if !(self.backbone_lr_ratio > 0.0) {
            return Err("backbone_lr_ratio must be positive".into());
        }
        Ok(())
    }

    pub fn normalization(&self) -> Normalization {
        if self.normalize {
            Normalization::imagenet()
        } else {
            Normalization::IDENTITY
        }
    }

    pub fn batch_spec(&self) -> BatchSpec {
        BatchSpec {
            batch_size: self.batch_size,
            shuffle: true,
            augment: if self.augment {
                AugmentSpec::default()
            } else {
                AugmentSpec::NONE
            },
            normalization: self.normalization(),
            resolution: self.resolution,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            batch: self.batch_spec(),
            max_lr: self.max_lr,
            policy: self.policy,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            backbone_lr_ratio: self.backbone_lr_ratio,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}
