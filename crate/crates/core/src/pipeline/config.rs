use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::deform::DEFAULT_ARAP_ITERATIONS;
use crate::geometry::DEFAULT_DENSE_SAMPLES;
use crate::metrics::MetricConfig;
use crate::neural::{AdamConfig, Encoder};
use crate::objective::LossConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Hidden layer count.
    pub layers: usize,
    pub width: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { layers: 4, width: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArapConfig {
    pub iterations: usize,
}

impl Default for ArapConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ARAP_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    pub stride: usize,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self { stride: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// Surface samples backing nearest-point queries on mesh and soup targets.
    pub dense_samples: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            dense_samples: DEFAULT_DENSE_SAMPLES,
        }
    }
}

/// Everything that shapes a draping run. Deserializes from TOML with every
/// key optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrapeConfig {
    pub iterations: usize,
    pub seed: u64,
    pub encoder: Encoder,
    pub net: NetConfig,
    pub optimizer: AdamConfig,
    pub loss: LossConfig,
    pub arap: ArapConfig,
    pub snapshot: SnapshotConfig,
    pub metrics: MetricConfig,
    pub target: TargetConfig,
}

impl Default for DrapeConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            seed: 0,
            encoder: Encoder::default(),
            net: NetConfig::default(),
            optimizer: AdamConfig::default(),
            loss: LossConfig::default(),
            arap: ArapConfig::default(),
            snapshot: SnapshotConfig::default(),
            metrics: MetricConfig::default(),
            target: TargetConfig::default(),
        }
    }
}

impl DrapeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if self.encoder.reveal_iters > self.iterations {
            return fail(format!(
                "encoder.reveal_iters ({}) must not exceed iterations ({})",
                self.encoder.reveal_iters, self.iterations
            ));
        }
        if self.net.width == 0 {
            return fail("net.width must be at least 1".into());
        }
        if self.arap.iterations == 0 {
            return fail("arap.iterations must be at least 1".into());
        }
        if self.snapshot.stride == 0 {
            return fail("snapshot.stride must be at least 1".into());
        }
        if self.target.dense_samples == 0 {
            return fail("target.dense_samples must be at least 1".into());
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.epsilon > 0.0) {
            return fail("optimizer settings out of range".into());
        }
        self.loss.validate().map_err(PipelineError::Config)?;
        self.metrics.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}
