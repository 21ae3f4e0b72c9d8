//! One JSON file for a whole run: training hyperparameters under `"train"`
//! and the augmentation pipeline under `"augment"`. Both sections are
//! optional and every field inside them has a default, so `{}` is a valid
//! config; unknown keys anywhere are rejected to catch typos.

use std::path::Path;

use crate::augment::AugmentationConfig;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

/// Combined run configuration.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub augment: AugmentationConfig,
}

impl RunConfig {
    /// Checks both sections.
    ///
    /// # Errors
    /// Errors when either section fails its own validation.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.augment.validate()
    }

    /// Reads and validates a config file.
    ///
    /// # Errors
    /// `Io` when the file cannot be read, `ConfigParse` on malformed or
    /// unknown-keyed JSON, `Config` when values fail validation.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            source: e,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Writes the config as pretty-printed JSON.
    ///
    /// # Errors
    /// Errors when the file cannot be written.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text =
            serde_json::to_string_pretty(self).expect("config always serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_yields_defaults() {
        let config: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config, RunConfig::default());
        config.validate().unwrap();
    }

    #[test]
    fn partial_overrides_leave_the_rest_at_defaults() {
        let text = r#"{
            "train": { "initial_lr": 0.01, "batch_size": 4 },
            "augment": { "flip_probability": 1.0 }
        }"#;
        let config: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.train.initial_lr, 0.01);
        assert_eq!(config.train.batch_size, 4);
        assert_eq!(config.train.lr_decay, TrainConfig::default().lr_decay);
        assert_eq!(config.augment.flip_probability, 1.0);
        assert_eq!(
            config.augment.noise_probability,
            AugmentationConfig::default().noise_probability
        );
    }

    #[test]
    fn unknown_keys_are_rejected_at_all_levels() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"trian": {}}"#).is_err());
        assert!(
            serde_json::from_str::<RunConfig>(r#"{"train": {"learning_rate": 1}}"#)
                .is_err()
        );
        assert!(
            serde_json::from_str::<RunConfig>(r#"{"augment": {"flip_prob": 1}}"#)
                .is_err()
        );
    }

    #[test]
    fn file_round_trip_and_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut config = RunConfig::default();
        config.train.max_epochs = 7;
        config.save(&path).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded, config);

        std::fs::write(&path, "{ not json").unwrap();
        match RunConfig::load(&path) {
            Err(Error::ConfigParse { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected ConfigParse, got {other:?}"),
        }

        match RunConfig::load(dir.path().join("missing.json")) {
            Err(Error::Io { .. }) => {}
            other => panic!("expected Io, got {other:?}"),
        }

        // Structurally valid JSON with a value that fails validation.
        std::fs::write(&path, r#"{"train": {"initial_lr": -1.0}}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
    }
}
