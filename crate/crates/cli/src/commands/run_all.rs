//! `run-all`: synth, all training stages, and every evaluation mode, with
//! one combined JSON report.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::errors::CliResult;

use super::train::StageSelector;
use super::{ensure_dir, write_json_report, DataPaths, ModelPaths};

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let report_dir = cfg.require_path("report_dir")?;
    ensure_dir(&report_dir)?;
    let paths = DataPaths::from_config(cfg)?;
    let models = ModelPaths::from_config(cfg)?;

    super::synth::execute(cfg)?;
    let train_report = super::train::execute(cfg, StageSelector::All)?;

    let (_, cmc_summary) = super::eval::execute_cmc(
        cfg,
        &models.stage3,
        &paths.probe_features,
        &paths.gallery_features,
        &report_dir,
    )?;
    let map_summary = super::eval::execute_map(
        cfg,
        &models.stage3,
        &paths.probe_features,
        &paths.gallery_features,
        &report_dir,
    )?;
    let attr_summary = super::eval::execute_attr(
        cfg,
        &models.stage3,
        &paths.id_features,
        &paths.eval_attributes,
        &report_dir,
    )?;

    let mut combined: BTreeMap<String, Value> = BTreeMap::new();
    combined.insert(
        "datasets".to_string(),
        json!({
            "gallery_features": paths.gallery_features.display().to_string(),
            "id_features": paths.id_features.display().to_string(),
            "probe_features": paths.probe_features.display().to_string(),
            "train_features": paths.train_features.display().to_string(),
        }),
    );
    combined.insert(
        "train".to_string(),
        serde_json::to_value(&train_report).unwrap_or(Value::Null),
    );
    combined.insert("cmc".to_string(), json!(cmc_summary));
    combined.insert("map".to_string(), json!(map_summary));
    combined.insert("attr".to_string(), json!(attr_summary));
    write_json_report(&report_dir.join("run_all.json"), &combined)?;
    println!("run-all: combined report -> {}", report_dir.join("run_all.json").display());
    Ok(())
}
