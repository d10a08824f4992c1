use crate::error::{config, Result};
use crate::network::{DiscriminatorConfig, GeneratorConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Complete run configuration, read from TOML.
///
/// ```toml
/// seed = 7
/// [model]
/// guidance = "neural-codes"
/// [train]
/// iterations = 2000
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub model: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub loss: LossConfig,
    pub train: ScheduleConfig,
    pub data: DataConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    /// Frozen random conv pyramid.
    Random,
    /// The image itself, making the perceptual loss a multi-scale L1.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub perceptual: f64,
    pub adversarial: f64,
    pub feature_matching: f64,
    /// Weight of the warped-source constraint, applied on top of the three
    /// weights above.
    pub warp: f64,
    pub extractor: ExtractorKind,
    pub extractor_seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            perceptual: 10.0,
            adversarial: 1.0,
            feature_matching: 10.0,
            warp: 1.0,
            extractor: ExtractorKind::Random,
            extractor_seed: 1234,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fractions of `iterations` at which the learning rate is multiplied by
    /// `lr_decay`.
    pub milestones: Vec<f64>,
    pub lr_decay: f64,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 4,
            lr: 2e-4,
            milestones: vec![0.3, 0.6],
            lr_decay: 0.1,
            checkpoint_every: 500,
        }
    }
}

impl ScheduleConfig {
    /// Iteration indices where the learning rate drops.
    pub fn milestone_iterations(&self) -> Vec<usize> {
        self.milestones
            .iter()
            .map(|f| (f * self.iterations as f64).round() as usize)
            .collect()
    }

    /// Learning rate used for (zero-based) iteration `it`.
    pub fn lr_at(&self, it: usize) -> f64 {
        let passed = self.milestone_iterations().iter().filter(|&&m| it >= m).count();
        self.lr * self.lr_decay.powi(passed as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub identities: usize,
    pub frames_per_identity: usize,
    /// Identities (taken from the end) kept out of training.
    pub held_out: usize,
    pub resolution: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            identities: 20,
            frames_per_identity: 20,
            held_out: 4,
            resolution: 64,
            seed: 2024,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let l = &self.loss;
        let weights = [l.perceptual, l.adversarial, l.feature_matching, l.warp];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(config("loss weights must be finite and non-negative"));
        }
        if l.perceptual + l.adversarial + l.feature_matching <= 0.0 {
            return Err(config("at least one loss weight must be positive"));
        }
        let t = &self.train;
        if t.batch_size == 0 || !(t.lr > 0.0) || !(t.lr_decay > 0.0) {
            return Err(config("batch_size, lr and lr_decay must be positive"));
        }
        if t.milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(config("milestones are fractions of the run in [0, 1]"));
        }
        let d = &self.data;
        if d.resolution != self.model.resolution {
            return Err(config(format!(
                "data resolution {} differs from model resolution {}",
                d.resolution, self.model.resolution
            )));
        }
        if d.frames_per_identity < 2 || d.held_out >= d.identities {
            return Err(config("need at least 2 frames per identity and one training identity"));
        }
        Ok(())
    }
}
