//! Experiment configuration: one JSON document that pins everything a run
//! needs to be reproduced bit-for-bit (sizes, hyperparameters, seeds,
//! precision mode).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ProbeConfig;
use crate::loocc::LooccConfig;
use crate::nets::NetConfig;
use crate::render::CameraIntrinsics;
use crate::scene::{DatasetConfig, GeneratorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub train: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { data: 1, init: 2, train: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExperimentConfig {
    pub precision: Precision,
    pub seeds: Seeds,
    /// Scene generation (image size, classes, renderer constants).
    pub generator: GeneratorConfig,
    /// Dataset size and split fractions; the split seed is `seeds.data`.
    pub n_scenes: usize,
    pub split_fractions: [f64; 3],
    pub net: NetConfig,
    pub loocc: LooccConfig,
    pub probe: ProbeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            precision: Precision::F32,
            seeds: Seeds::default(),
            generator: GeneratorConfig::default(),
            n_scenes: 1000,
            split_fractions: [0.8, 0.1, 0.1],
            net: NetConfig::default(),
            loocc: LooccConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.net.validate()?;
        self.loocc.validate()?;
        if self.net.image_size != self.generator.image_size {
            return Err(Error::InvalidConfig(format!(
                "net.image_size {} must match generator.image_size {}",
                self.net.image_size, self.generator.image_size
            )));
        }
        self.dataset_config().validate()
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n: self.n_scenes,
            fractions: self.split_fractions,
            seed: self.seeds.data,
            generator: self.generator.clone(),
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        self.generator.intrinsics()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_roundtrips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"n_scenes": 64}"#).unwrap();
        assert_eq!(cfg.n_scenes, 64);
        assert_eq!(cfg.loocc.temperature, 0.5);
        assert_eq!(cfg.loocc.alpha, 0.01);
        assert_eq!(cfg.loocc.beta, 1.0);
        assert_eq!(cfg.split_fractions, [0.8, 0.1, 0.1]);
    }

    #[test]
    fn mismatched_image_sizes_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.net.image_size = 32;
        assert!(cfg.validate().is_err());
    }
}
