//! The experiment config file: one JSON document holding every knob a run
//! needs, validated up front with key-path error messages. Unknown keys are
//! rejected so typos fail loudly instead of silently using defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use voxl_core::coreset::CoresetConfig;
use voxl_core::eval::BenchSpec;
use voxl_core::lifelong::{CurriculumConfig, EnvConfig, TaskSpec};
use voxl_core::volume::{Coord3, Dims3};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub tasks: Vec<TaskSpec>,
    /// Compression applied to every train/test volume; absent means the
    /// conventional full-resolution pipeline.
    pub coreset: Option<CoresetConfig>,
    pub env: EnvConfig,
    pub curriculum: CurriculumConfig,
    pub bench: BenchSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "voxl-out".into(),
            tasks: vec![TaskSpec {
                name: "landmark".into(),
                dims: Dims3::new(48, 48, 48),
                landmark_center: Coord3::new(32, 30, 18),
                landmark_radii: [6.0, 5.0, 4.0],
                noise_sigma: 0.02,
            }],
            coreset: Some(CoresetConfig::default()),
            env: EnvConfig::default(),
            curriculum: CurriculumConfig::default(),
            bench: BenchSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.tasks.is_empty() {
            return Err(CliError::usage("tasks: at least one task is required"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            let path = format!("tasks[{i}]");
            if t.name.is_empty()
                || !t
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(CliError::usage(format!(
                    "{path}.name: must be non-empty and use only [A-Za-z0-9_-], got {:?}",
                    t.name
                )));
            }
            if t.dims.count() == 0 {
                return Err(CliError::usage(format!("{path}.dims: must be positive")));
            }
            if !(t.noise_sigma >= 0.0) {
                return Err(CliError::usage(format!(
                    "{path}.noise_sigma: must be non-negative, got {}",
                    t.noise_sigma
                )));
            }
        }
        let mut names: Vec<&str> = self.tasks.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.tasks.len() {
            return Err(CliError::usage("tasks: names must be unique"));
        }
        if let Some(cs) = &self.coreset {
            cs.validate()
                .map_err(|e| CliError::usage(format!("coreset: {e}")))?;
        }
        self.curriculum
            .validate()
            .map_err(|e| CliError::usage(format!("curriculum: {e}")))?;
        if self.env.obs_dims.count() == 0 {
            return Err(CliError::usage("env.obs_dims: must be positive"));
        }
        Ok(())
    }
}

/// Parse a JSON config file of type `T`, reporting the JSON key path of any
/// deserialization failure.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::usage(format!(
            "config {}: {}: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = load_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn default_config_round_trips_and_validates() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let f = write_tmp(&text);
        let loaded = load_run_config(f.path()).unwrap();
        assert_eq!(loaded.seed, cfg.seed);
        assert_eq!(loaded.tasks.len(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let f = write_tmp(r#"{"curriculum": {"replay_mixx": 0.5}}"#);
        let err = load_run_config(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("curriculum"), "{msg}");
        assert!(msg.contains("replay_mixx"), "{msg}");
    }

    #[test]
    fn out_of_range_replay_mix_names_the_key() {
        let f = write_tmp(r#"{"curriculum": {"replay_mix": 1.5}}"#);
        let err = load_run_config(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("replay_mix"), "{msg}");
        assert!(msg.contains("1.5"), "{msg}");
    }

    #[test]
    fn bad_task_names_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.tasks[0].name = "bad name!".into();
        assert!(cfg.validate().is_err());
    }
}
