//! Run configuration: UTF-8 `key = value` lines with `#` comments.
//!
//! Unknown and duplicate keys are rejected at parse time; each subcommand
//! then requires the keys it needs. Values never carry quoting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::errors::{CliError, CliResult};

/// Every key the configuration format accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "data_dir",
    "model_dir",
    "report_dir",
    "net.layer_sizes",
    "net.hidden_activation",
    "net.init_seed",
    "label.p",
    "label.tau",
    "loss.theta",
    "loss.gamma",
    "train.seed",
    "train.momentum",
    "stage1.epochs",
    "stage1.batch_size",
    "stage1.learning_rate",
    "stage2.epochs",
    "stage2.batch_size",
    "stage2.learning_rate",
    "stage2.triplets_per_epoch",
    "stage3.epochs",
    "stage3.batch_size",
    "stage3.learning_rate",
    "baseline.epochs",
    "baseline.batch_size",
    "baseline.learning_rate",
    "baseline.triplets_per_epoch",
    "synth.seed",
    "synth.train_identities",
    "synth.id_identities",
    "synth.distractor_identities",
    "synth.attribute_count",
    "synth.feature_dim",
    "synth.cameras",
    "synth.samples_per_identity_per_camera",
    "synth.mean_positive_attributes",
    "synth.attribute_flip_rate",
    "synth.feature_noise_sigma",
    "synth.camera_offset_scale",
    "synth.probe_camera",
    "eval.num_tests",
    "eval.probe_size",
    "eval.seed",
    "eval.distance",
    "eval.feature",
    "eval.same_camera_relevant",
    "gradcheck.seeds",
    "gradcheck.epsilon",
    "gradcheck.inject_fault",
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<RunConfig> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Config(format!(
                    "line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(RunConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> CliResult<&str> {
        self.get(key)
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str, raw: &str) -> CliResult<T> {
        raw.parse::<T>().map_err(|_| {
            CliError::Config(format!(
                "key `{key}`: cannot parse `{raw}` as {}",
                std::any::type_name::<T>()
            ))
        })
    }

    pub fn require_usize(&self, key: &str) -> CliResult<usize> {
        let raw = self.require(key)?.to_string();
        self.parse_value(key, &raw)
    }

    pub fn require_u64(&self, key: &str) -> CliResult<u64> {
        let raw = self.require(key)?.to_string();
        self.parse_value(key, &raw)
    }

    pub fn require_f64(&self, key: &str) -> CliResult<f64> {
        let raw = self.require(key)?.to_string();
        self.parse_value(key, &raw)
    }

    pub fn require_path(&self, key: &str) -> CliResult<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.get(key) {
            Some(raw) => self.parse_value(key, &raw.to_string()),
            None => Ok(default),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        match self.get(key) {
            Some(raw) => self.parse_value(key, &raw.to_string()),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.get(key) {
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(CliError::Config(format!(
                "key `{key}`: expected true or false, got `{other}`"
            ))),
            None => Ok(default),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Comma-separated positive integers.
    pub fn require_usize_list(&self, key: &str) -> CliResult<Vec<usize>> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|t| {
                t.trim().parse::<usize>().map_err(|_| {
                    CliError::Config(format!("key `{key}`: bad integer `{}`", t.trim()))
                })
            })
            .collect()
    }
}
