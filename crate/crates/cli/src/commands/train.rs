//! `train`: run pipeline stages, writing checkpoints and a report.

use std::time::Instant;

use ssdal_core::{
    embedding_triplet_baseline, predict_initial_labels, save_checkpoint, stage1_train,
    stage2_finetune, stage3_combine, IdSet, LabeledSet, NetworkParams, PipelineReport,
    StageReport, StageResult,
};

use crate::config::RunConfig;
use crate::csvio::{check_aligned, read_attributes_csv, read_features_csv};
use crate::errors::{CliError, CliResult};

use super::{
    ensure_dir, load_prerequisite_model, network_config, stage_config, write_json_report,
    DataPaths, ModelPaths, BASELINE_TAG, STAGE1_TAG, STAGE2_TAG, STAGE3_TAG,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StageSelector {
    #[value(name = "1")]
    Stage1,
    #[value(name = "2")]
    Stage2,
    #[value(name = "3")]
    Stage3,
    All,
    BaselineFc,
}

fn load_labeled_set(paths: &DataPaths) -> CliResult<LabeledSet> {
    let features = read_features_csv(&paths.train_features)?;
    let (ids, labels) = read_attributes_csv(&paths.train_attributes)?;
    check_aligned(&features.sample_ids, &ids)?;
    Ok(LabeledSet::new(features.features, labels)?)
}

fn load_id_set(paths: &DataPaths) -> CliResult<IdSet> {
    let table = read_features_csv(&paths.id_features)?;
    let (person_ids, camera_ids) = table.known_ids()?;
    Ok(IdSet::new(table.features, person_ids, camera_ids)?)
}

struct TrainContext {
    paths: DataPaths,
    models: ModelPaths,
    report: PipelineReport,
}

impl TrainContext {
    fn record(
        &mut self,
        name: &str,
        checkpoint: &std::path::Path,
        result: &StageResult,
        started: Instant,
    ) -> CliResult<()> {
        save_checkpoint(&result.params, checkpoint)?;
        let wall = started.elapsed().as_secs_f64();
        let file = checkpoint
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        println!(
            "train {name}: final loss {:?}, {:.3}s -> {file}",
            result.epoch_losses.last(),
            wall
        );
        self.report
            .insert(name, StageReport::from_result(file, result, wall));
        Ok(())
    }
}

fn run_stage1(cfg: &RunConfig, ctx: &mut TrainContext) -> CliResult<NetworkParams> {
    let started = Instant::now();
    let net_cfg = network_config(cfg)?;
    let stage_cfg = stage_config(cfg, "stage1", STAGE1_TAG)?;
    let t_set = load_labeled_set(&ctx.paths)?;
    let result = stage1_train(&t_set, &stage_cfg, &net_cfg)?;
    let checkpoint = ctx.models.stage1.clone();
    ctx.record("stage1", &checkpoint, &result, started)?;
    Ok(result.params)
}

fn run_stage2(
    cfg: &RunConfig,
    ctx: &mut TrainContext,
    from: Option<NetworkParams>,
) -> CliResult<NetworkParams> {
    let started = Instant::now();
    let params = match from {
        Some(p) => p,
        None => load_prerequisite_model(&ctx.models.stage1)?,
    };
    let stage_cfg = stage_config(cfg, "stage2", STAGE2_TAG)?;
    let u_set = load_id_set(&ctx.paths)?;
    let tilde = predict_initial_labels(&params, &u_set, stage_cfg.p)?;
    let result = stage2_finetune(&params, &u_set, &tilde, &stage_cfg)?;
    let checkpoint = ctx.models.stage2.clone();
    ctx.record("stage2", &checkpoint, &result, started)?;
    Ok(result.params)
}

fn run_stage3(
    cfg: &RunConfig,
    ctx: &mut TrainContext,
    from: Option<NetworkParams>,
) -> CliResult<NetworkParams> {
    let started = Instant::now();
    let params = match from {
        Some(p) => p,
        None => load_prerequisite_model(&ctx.models.stage2)?,
    };
    let stage_cfg = stage_config(cfg, "stage3", STAGE3_TAG)?;
    let t_set = load_labeled_set(&ctx.paths)?;
    let u_set = load_id_set(&ctx.paths)?;
    let result = stage3_combine(&params, &t_set, &u_set, &stage_cfg)?;
    let checkpoint = ctx.models.stage3.clone();
    ctx.record("stage3", &checkpoint, &result, started)?;
    Ok(result.params)
}

fn run_baseline(cfg: &RunConfig, ctx: &mut TrainContext) -> CliResult<NetworkParams> {
    let started = Instant::now();
    let params = load_prerequisite_model(&ctx.models.stage1)?;
    let stage_cfg = stage_config(cfg, "baseline", BASELINE_TAG)?;
    let u_set = load_id_set(&ctx.paths)?;
    let result = embedding_triplet_baseline(&params, &u_set, &stage_cfg)?;
    let checkpoint = ctx.models.baseline.clone();
    ctx.record("baseline", &checkpoint, &result, started)?;
    Ok(result.params)
}

pub fn execute(cfg: &RunConfig, stage: StageSelector) -> CliResult<PipelineReport> {
    let model_dir = cfg.require_path("model_dir")?;
    let report_dir = cfg.require_path("report_dir")?;
    ensure_dir(&model_dir)?;
    ensure_dir(&report_dir)?;
    let mut ctx = TrainContext {
        paths: DataPaths::from_config(cfg)?,
        models: ModelPaths::new(&model_dir),
        report: PipelineReport::default(),
    };

    match stage {
        StageSelector::Stage1 => {
            run_stage1(cfg, &mut ctx)?;
        }
        StageSelector::Stage2 => {
            run_stage2(cfg, &mut ctx, None)?;
        }
        StageSelector::Stage3 => {
            run_stage3(cfg, &mut ctx, None)?;
        }
        StageSelector::All => {
            let s1 = run_stage1(cfg, &mut ctx)?;
            let s2 = run_stage2(cfg, &mut ctx, Some(s1))?;
            run_stage3(cfg, &mut ctx, Some(s2))?;
        }
        StageSelector::BaselineFc => {
            run_baseline(cfg, &mut ctx)?;
        }
    }

    ctx.report.validate().map_err(CliError::from)?;
    write_json_report(&report_dir.join("train_report.json"), &ctx.report)?;
    Ok(ctx.report)
}

pub fn run(cfg: &RunConfig, stage: StageSelector) -> CliResult<()> {
    execute(cfg, stage).map(|_| ())
}
