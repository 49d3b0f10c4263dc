//! `eval`: CMC, mAP, and attribute-accuracy reports.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};
use ssdal_core::{
    aggregate_attribute_accuracy, averaged_cmc, load_checkpoint, mean_average_precision,
    pool_tracklet, rank_gallery, relevance_from_ids, CmcCurve, DistanceKind, LabeledSet,
    MapResult, NetworkParams, PoolMode, ProbeGallery, QueryMode, SplitProtocol,
};

use crate::config::RunConfig;
use crate::csvio::{check_aligned, read_attributes_csv, read_features_csv, FeatureTable};
use crate::errors::{CliError, CliResult};

use super::{ensure_dir, model_features, write_json_report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMode {
    Cmc,
    Map,
    Attr,
}

pub struct EvalInputs<'a> {
    pub model: &'a Path,
    pub probe: Option<&'a Path>,
    pub gallery: Option<&'a Path>,
    pub features: Option<&'a Path>,
    pub attributes: Option<&'a Path>,
}

fn required<'a>(opt: Option<&'a Path>, flag: &str, mode: &str) -> CliResult<&'a Path> {
    opt.ok_or_else(|| CliError::Config(format!("eval mode {mode} requires --{flag}")))
}

fn distance_kind(cfg: &RunConfig) -> CliResult<DistanceKind> {
    cfg.str_or("eval.distance", "cosine")
        .parse()
        .map_err(CliError::from)
}

fn build_probe_gallery(
    cfg: &RunConfig,
    params: &NetworkParams,
    probe_table: &FeatureTable,
    gallery_table: &FeatureTable,
) -> CliResult<ProbeGallery> {
    let feature_kind = cfg.str_or("eval.feature", "attributes");
    let tau = cfg.require_f64("label.tau")?;
    let probe_feats = model_features(params, &probe_table.features, feature_kind, tau)?;
    let gallery_feats = model_features(params, &gallery_table.features, feature_kind, tau)?;
    let (probe_ids, probe_cams) = probe_table.known_ids()?;
    let (gallery_ids, gallery_cams) = gallery_table.known_ids()?;
    Ok(ProbeGallery::new(
        probe_feats,
        probe_ids,
        probe_cams,
        gallery_feats,
        gallery_ids,
        gallery_cams,
    )?)
}

fn write_metric_csv(path: &Path, rows: &[(String, f64)]) -> CliResult<()> {
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "metric,value")?;
        for (metric, value) in rows {
            writeln!(out, "{metric},{value:.6}")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn execute_cmc(
    cfg: &RunConfig,
    model: &Path,
    probe: &Path,
    gallery: &Path,
    report_dir: &Path,
) -> CliResult<(CmcCurve, BTreeMap<String, Value>)> {
    let params = load_checkpoint(model)?;
    let probe_table = read_features_csv(probe)?;
    let gallery_table = read_features_csv(gallery)?;
    let pg = build_probe_gallery(cfg, &params, &probe_table, &gallery_table)?;
    let protocol = SplitProtocol::new(
        cfg.require_usize("eval.num_tests")?,
        cfg.require_usize("eval.probe_size")?,
        cfg.require_u64("eval.seed")?,
    )?;
    let distance = distance_kind(cfg)?;
    let curve = averaged_cmc(&pg, &protocol, distance)?;

    let csv_path = report_dir.join("cmc.csv");
    let file = File::create(&csv_path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", csv_path.display())))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "rank,score")?;
        for (i, s) in curve.scores.iter().enumerate() {
            writeln!(out, "{},{s:.6}", i + 1)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| CliError::Io(format!("cannot write {}: {e}", csv_path.display())))?;

    let mut summary = BTreeMap::new();
    summary.insert("distance".to_string(), json!(format!("{distance:?}")));
    summary.insert(
        "feature".to_string(),
        json!(cfg.str_or("eval.feature", "attributes")),
    );
    summary.insert("num_tests".to_string(), json!(protocol.num_tests));
    summary.insert("probe_size".to_string(), json!(protocol.probe_size));
    summary.insert("protocol_seed".to_string(), json!(protocol.seed));
    for rank in [1usize, 5, 10, 20] {
        summary.insert(format!("rank{rank}_percent"), json!(curve.at_rank(rank)));
    }
    write_json_report(&report_dir.join("cmc_summary.json"), &summary)?;
    println!(
        "eval cmc: rank1 {:.2}% over {} tests -> {}",
        curve.rank1(),
        protocol.num_tests,
        report_dir.display()
    );
    Ok((curve, summary))
}

/// Group probe rows by person id, in order of first appearance.
fn tracklets(pg: &ProbeGallery) -> Vec<Vec<usize>> {
    let mut order: Vec<u32> = Vec::new();
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, &pid) in pg.probe_ids.iter().enumerate() {
        if !groups.contains_key(&pid) {
            order.push(pid);
        }
        groups.entry(pid).or_default().push(row);
    }
    order.into_iter().map(|pid| groups[&pid].clone()).collect()
}

fn multi_query_map(
    pg: &ProbeGallery,
    distance: DistanceKind,
    same_camera_relevant: bool,
    pool: PoolMode,
    mode: QueryMode,
) -> CliResult<MapResult> {
    let groups = tracklets(pg);
    let mut rankings = Vec::with_capacity(groups.len());
    let mut relevance: Vec<HashSet<usize>> = Vec::with_capacity(groups.len());
    for group in &groups {
        let rows: Vec<&[f64]> = group.iter().map(|&r| pg.probe_features.row(r)).collect();
        let pooled = pool_tracklet(&rows, pool)?;
        rankings.push(rank_gallery(&pooled, &pg.gallery_features, distance)?);
        let pid = pg.probe_ids[group[0]];
        let cameras: HashSet<u32> = group.iter().map(|&r| pg.probe_camera_ids[r]).collect();
        relevance.push(
            (0..pg.gallery_ids.len())
                .filter(|&g| {
                    pg.gallery_ids[g] == pid
                        && (same_camera_relevant || !cameras.contains(&pg.gallery_camera_ids[g]))
                })
                .collect(),
        );
    }
    Ok(mean_average_precision(&rankings, &relevance, mode)?)
}

pub fn execute_map(
    cfg: &RunConfig,
    model: &Path,
    probe: &Path,
    gallery: &Path,
    report_dir: &Path,
) -> CliResult<BTreeMap<String, Value>> {
    let params = load_checkpoint(model)?;
    let probe_table = read_features_csv(probe)?;
    let gallery_table = read_features_csv(gallery)?;
    let pg = build_probe_gallery(cfg, &params, &probe_table, &gallery_table)?;
    let distance = distance_kind(cfg)?;
    let same_camera_relevant = cfg.bool_or("eval.same_camera_relevant", false)?;

    // Single query: one ranking per probe row.
    let mut rankings = Vec::with_capacity(pg.probe_ids.len());
    for r in 0..pg.probe_features.rows() {
        rankings.push(rank_gallery(pg.probe_features.row(r), &pg.gallery_features, distance)?);
    }
    let relevance = relevance_from_ids(&pg, same_camera_relevant);
    let single = mean_average_precision(&rankings, &relevance, QueryMode::Single)?;

    let multi_avg = multi_query_map(
        &pg,
        distance,
        same_camera_relevant,
        PoolMode::Avg,
        QueryMode::MultiAvg,
    )?;
    let multi_max = multi_query_map(
        &pg,
        distance,
        same_camera_relevant,
        PoolMode::Max,
        QueryMode::MultiMax,
    )?;

    let rows = vec![
        ("map_single".to_string(), single.map_percent),
        ("rank1_single".to_string(), single.rank1_percent),
        ("map_multi_avg".to_string(), multi_avg.map_percent),
        ("rank1_multi_avg".to_string(), multi_avg.rank1_percent),
        ("map_multi_max".to_string(), multi_max.map_percent),
        ("rank1_multi_max".to_string(), multi_max.rank1_percent),
    ];
    write_metric_csv(&report_dir.join("map.csv"), &rows)?;
    let summary: BTreeMap<String, Value> =
        rows.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    write_json_report(&report_dir.join("map_summary.json"), &summary)?;
    println!(
        "eval map: single {:.2}%, multi_avg {:.2}%, multi_max {:.2}% -> {}",
        single.map_percent,
        multi_avg.map_percent,
        multi_max.map_percent,
        report_dir.display()
    );
    Ok(summary)
}

pub fn execute_attr(
    cfg: &RunConfig,
    model: &Path,
    features: &Path,
    attributes: &Path,
    report_dir: &Path,
) -> CliResult<BTreeMap<String, Value>> {
    let _ = cfg;
    let params = load_checkpoint(model)?;
    let table = read_features_csv(features)?;
    let (ids, labels) = read_attributes_csv(attributes)?;
    check_aligned(&table.sample_ids, &ids)?;
    let set = LabeledSet::new(table.features, labels)?;
    let accuracy = aggregate_attribute_accuracy(&params, &set)?;

    let rows = vec![("mean_attribute_accuracy_percent".to_string(), accuracy)];
    write_metric_csv(&report_dir.join("attr.csv"), &rows)?;
    let summary: BTreeMap<String, Value> =
        rows.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    write_json_report(&report_dir.join("attr_summary.json"), &summary)?;
    println!("eval attr: mean accuracy {accuracy:.2}% -> {}", report_dir.display());
    Ok(summary)
}

pub fn run(cfg: &RunConfig, mode: EvalMode, inputs: &EvalInputs<'_>) -> CliResult<()> {
    let report_dir = cfg.require_path("report_dir")?;
    ensure_dir(&report_dir)?;
    match mode {
        EvalMode::Cmc => {
            let probe = required(inputs.probe, "probe", "cmc")?;
            let gallery = required(inputs.gallery, "gallery", "cmc")?;
            execute_cmc(cfg, inputs.model, probe, gallery, &report_dir)?;
        }
        EvalMode::Map => {
            let probe = required(inputs.probe, "probe", "map")?;
            let gallery = required(inputs.gallery, "gallery", "map")?;
            execute_map(cfg, inputs.model, probe, gallery, &report_dir)?;
        }
        EvalMode::Attr => {
            let features = required(inputs.features, "features", "attr")?;
            let attributes = required(inputs.attributes, "attributes", "attr")?;
            execute_attr(cfg, inputs.model, features, attributes, &report_dir)?;
        }
    }
    Ok(())
}
