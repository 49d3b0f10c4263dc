//! Subcommand implementations.

pub mod eval;
pub mod gradcheck;
pub mod predict;
pub mod run_all;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use ssdal_core::seeding::derive_seed;
use ssdal_core::{
    to_sorted_json, HiddenActivation, LossParams, Matrix, NetworkConfig, NetworkParams,
    StageConfig,
};

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

/// File names written into `data_dir` by `synth` and read back by the
/// training and evaluation commands.
pub struct DataPaths {
    pub train_features: PathBuf,
    pub train_attributes: PathBuf,
    pub id_features: PathBuf,
    pub eval_attributes: PathBuf,
    pub probe_features: PathBuf,
    pub gallery_features: PathBuf,
}

impl DataPaths {
    pub fn new(data_dir: &Path) -> Self {
        DataPaths {
            train_features: data_dir.join("train_features.csv"),
            train_attributes: data_dir.join("train_attributes.csv"),
            id_features: data_dir.join("id_features.csv"),
            eval_attributes: data_dir.join("eval_attributes.csv"),
            probe_features: data_dir.join("probe_features.csv"),
            gallery_features: data_dir.join("gallery_features.csv"),
        }
    }

    pub fn from_config(cfg: &RunConfig) -> CliResult<Self> {
        Ok(DataPaths::new(&cfg.require_path("data_dir")?))
    }
}

/// Checkpoint file names under `model_dir`.
pub struct ModelPaths {
    pub stage1: PathBuf,
    pub stage2: PathBuf,
    pub stage3: PathBuf,
    pub baseline: PathBuf,
}

impl ModelPaths {
    pub fn new(model_dir: &Path) -> Self {
        ModelPaths {
            stage1: model_dir.join("model_stage1.txt"),
            stage2: model_dir.join("model_stage2.txt"),
            stage3: model_dir.join("model_stage3.txt"),
            baseline: model_dir.join("model_baseline.txt"),
        }
    }

    pub fn from_config(cfg: &RunConfig) -> CliResult<Self> {
        Ok(ModelPaths::new(&cfg.require_path("model_dir")?))
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create directory {}: {e}", dir.display())))
}

pub fn network_config(cfg: &RunConfig) -> CliResult<NetworkConfig> {
    let layer_sizes = cfg.require_usize_list("net.layer_sizes")?;
    let hidden: HiddenActivation = cfg
        .require("net.hidden_activation")?
        .parse()
        .map_err(CliError::from)?;
    let init_seed = cfg.require_u64("net.init_seed")?;
    NetworkConfig::new(layer_sizes, hidden, init_seed).map_err(CliError::from)
}

/// Stage numbers used to derive per-stage training seeds from `train.seed`.
pub const STAGE1_TAG: u64 = 1;
pub const STAGE2_TAG: u64 = 2;
pub const STAGE3_TAG: u64 = 3;
pub const BASELINE_TAG: u64 = 4;

/// Assemble the stage configuration from the `<prefix>.*` keys plus the
/// shared labeling and loss keys.
pub fn stage_config(cfg: &RunConfig, prefix: &str, stage_tag: u64) -> CliResult<StageConfig> {
    let key = |name: &str| format!("{prefix}.{name}");
    let triplets_per_epoch = if prefix == "stage2" || prefix == "baseline" {
        cfg.require_usize(&key("triplets_per_epoch"))?
    } else {
        0
    };
    let stage = StageConfig {
        epochs: cfg.require_usize(&key("epochs"))?,
        batch_size: cfg.require_usize(&key("batch_size"))?,
        triplets_per_epoch,
        learning_rate: cfg.require_f64(&key("learning_rate"))?,
        loss: LossParams::new(cfg.require_f64("loss.theta")?, cfg.require_f64("loss.gamma")?)
            .map_err(CliError::from)?,
        p: cfg.require_usize("label.p")?,
        tau: cfg.require_f64("label.tau")?,
        seed: derive_seed(cfg.require_u64("train.seed")?, &[stage_tag]),
        momentum: cfg.f64_or("train.momentum", 0.0)?,
        frozen_layers: Vec::new(),
    };
    stage.validate().map_err(CliError::from)?;
    Ok(stage)
}

/// Map raw features through the model into the matching feature space:
/// binary deep attributes (as reals) or the penultimate embedding.
pub fn model_features(
    params: &NetworkParams,
    features: &Matrix,
    kind: &str,
    tau: f64,
) -> CliResult<Matrix> {
    match kind {
        "attributes" => {
            let attrs = ssdal_core::predict_deep_attributes(params, features, tau)?;
            let k = attrs.first().map(|a| a.len()).unwrap_or(1);
            let mut data = Vec::with_capacity(attrs.len() * k);
            for a in &attrs {
                data.extend(a.bits().iter().map(|&b| b as f64));
            }
            Ok(Matrix::new(attrs.len(), k, data)?)
        }
        "embedding" => Ok(ssdal_core::embed(params, features)?),
        other => Err(CliError::Config(format!(
            "eval.feature must be attributes or embedding, got `{other}`"
        ))),
    }
}

pub fn write_json_report<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = to_sorted_json(value).map_err(CliError::from)?;
    std::fs::write(path, json + "\n")
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Load a checkpoint whose absence is a missing-prerequisite error rather
/// than a plain I/O error.
pub fn load_prerequisite_model(path: &Path) -> CliResult<NetworkParams> {
    if !path.exists() {
        return Err(CliError::MissingPrerequisite(format!(
            "checkpoint {} (run the earlier stage first)",
            path.display()
        )));
    }
    Ok(ssdal_core::load_checkpoint(path)?)
}
