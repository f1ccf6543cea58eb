//! Training configuration, loadable from a flat key-value TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Preset;
use crate::model::{LossWeights, ModelConfig};
use crate::tensor::AdamWConfig;
use crate::{Error, Result};

/// Everything a training run needs beyond the dataset itself. Every field
/// has a default, so a config file only lists what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Scene preset name; fixes image size, bins and vertex slots.
    pub preset: String,
    /// Weight of the next-token cross-entropy term.
    pub lambda_sequence: f64,
    /// Weight of the permutation cross-entropy term.
    pub lambda_permutation: f64,
    /// Peak learning rate. The effective rate ramps up linearly over the
    /// first `warmup_fraction` of the run, then follows a cosine anneal down
    /// to `lr_floor_fraction` of the peak at the final step.
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Fraction of `max_steps` spent ramping the learning rate from zero to
    /// its peak. Zero starts at the peak immediately.
    pub warmup_fraction: f64,
    /// Final learning rate as a fraction of the peak; 1.0 disables the
    /// anneal and holds the peak after warmup.
    pub lr_floor_fraction: f64,
    /// Gradients are rescaled so their global L2 norm never exceeds this;
    /// 0.0 disables clipping.
    pub gradient_clip_norm: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Steps between checkpoints and held-in accuracy probes.
    pub checkpoint_interval: usize,
    /// Row/column normalization iterations for the soft assignment.
    pub sinkhorn_iterations: usize,
    /// Score temperature for the soft assignment.
    pub temperature: f64,
    pub seed: u64,
    /// Stop once the teacher-forced token accuracy over the unaugmented
    /// training set reaches this value at a probe; > 1.0 disables it.
    pub early_stop_token_accuracy: f64,
    // Architecture knobs; sizes the preset dictates are not repeated here.
    pub patch_size: usize,
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            preset: "tiny".to_string(),
            lambda_sequence: 1.0,
            lambda_permutation: 10.0,
            learning_rate: 4e-4,
            weight_decay: 1e-4,
            warmup_fraction: 0.06,
            lr_floor_fraction: 0.1,
            gradient_clip_norm: 1.0,
            batch_size: 4,
            max_steps: 2000,
            checkpoint_interval: 250,
            sinkhorn_iterations: 100,
            temperature: 1.0,
            seed: 0,
            early_stop_token_accuracy: 2.0,
            patch_size: 8,
            embed_dim: 64,
            encoder_layers: 3,
            decoder_layers: 3,
            heads: 4,
            mlp_ratio: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(
            self.lambda_sequence >= 0.0 && self.lambda_permutation >= 0.0,
            "loss weights must be non-negative",
        )?;
        check(self.learning_rate > 0.0, "learning rate must be positive")?;
        check(self.weight_decay >= 0.0, "weight decay must be non-negative")?;
        check(
            (0.0..1.0).contains(&self.warmup_fraction),
            "warmup fraction must be in [0, 1)",
        )?;
        check(
            self.lr_floor_fraction > 0.0 && self.lr_floor_fraction <= 1.0,
            "learning rate floor fraction must be in (0, 1]",
        )?;
        check(self.gradient_clip_norm >= 0.0, "gradient clip norm must be non-negative")?;
        check(self.batch_size >= 1, "batch size must be at least one")?;
        check(self.max_steps >= 1, "need at least one step")?;
        check(self.checkpoint_interval >= 1, "checkpoint interval must be at least one")?;
        check(self.sinkhorn_iterations >= 1, "need at least one normalization iteration")?;
        check(self.temperature > 0.0, "temperature must be positive")?;
        let preset = self.preset()?;
        self.model_config(&preset)?.validate()
    }

    pub fn preset(&self) -> Result<Preset> {
        Preset::from_name(&self.preset)
            .ok_or_else(|| Error::Config(format!("unknown preset `{}`", self.preset)))
    }

    /// Architecture derived from the preset dimensions plus the knobs here.
    pub fn model_config(&self, preset: &Preset) -> Result<ModelConfig> {
        let config = ModelConfig {
            image_size: preset.image_size,
            patch_size: self.patch_size,
            embed_dim: self.embed_dim,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            heads: self.heads,
            n_vertex_slots: preset.n_vertex_slots,
            n_bins: preset.n_bins,
            mlp_ratio: self.mlp_ratio,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_sequence: self.lambda_sequence,
            lambda_permutation: self.lambda_permutation,
        }
    }

    pub fn optimizer_config(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }

    /// Effective learning rate at a zero-based step: linear warmup to the
    /// peak, then a cosine anneal down to the floor at the final step.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let warmup = (self.warmup_fraction * self.max_steps as f64).round() as usize;
        if step < warmup {
            return self.learning_rate * (step + 1) as f64 / warmup as f64;
        }
        let span = (self.max_steps.saturating_sub(warmup)).max(1) as f64;
        let t = ((step - warmup) as f64 / span).min(1.0);
        let floor = self.lr_floor_fraction;
        let anneal = floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        self.learning_rate * anneal
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
