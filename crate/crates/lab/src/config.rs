//! The merged TOML configuration tree.
//!
//! Top-level keys: `seed`, `output_root`, and the tables `[synth]`, `[model]`,
//! `[train]`, `[sample]`, `[vlm]`. Unknown keys anywhere are rejected; every
//! missing key takes its default. A top-level `seed` overrides the seeds of
//! all tables.

use std::fs;
use std::path::{Path, PathBuf};

use effecterase_core::model::ModelConfig;
use effecterase_core::sample::SampleConfig;
use effecterase_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::SynthConfig;
use crate::error::{LabError, Result};
use crate::vlm::VlmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Parent of the timestamped run directories.
    pub output_root: PathBuf,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub vlm: VlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_root: PathBuf::from("runs"),
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sample: SampleConfig::default(),
            vlm: VlmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| LabError::config(one_line(&e.to_string())))?;
        cfg.apply_global_seed();
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| LabError::config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| LabError::config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.apply_global_seed();
    }

    fn apply_global_seed(&mut self) {
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.train.seed = s;
            self.sample.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let core = |e: effecterase_core::Error| LabError::config(e.to_string());
        self.synth.validate()?;
        self.model.validate().map_err(core)?;
        self.train.validate().map_err(core)?;
        self.sample.validate().map_err(core)?;
        self.vlm.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| LabError::config(format!("config cannot be written as TOML: {e}")))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[train]\nlearning_rte = 0.1").is_err());
        assert!(RunConfig::from_toml("[synth.motion]\nzoomm = [1.1, 1.2]").is_err());
        assert!(RunConfig::from_toml("[vlm]\ntoken = \"x\"").is_err());
    }

    #[test]
    fn partial_tables_keep_other_defaults() {
        let cfg = RunConfig::from_toml("[train]\nlearning_rate = 0.002\n[sample]\nsteps = 5").unwrap();
        assert_eq!(cfg.train.learning_rate, 0.002);
        assert_eq!(cfg.train.lambda_ec, TrainConfig::default().lambda_ec);
        assert_eq!(cfg.sample.steps, 5);
    }

    #[test]
    fn global_seed_reaches_every_table() {
        let cfg = RunConfig::from_toml("seed = 7\n[train]\nseed = 3").unwrap();
        assert_eq!((cfg.synth.seed, cfg.train.seed, cfg.sample.seed), (7, 7, 7));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set_seed(11);
        cfg.train.max_steps = 10;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
