//! `predict`: binarize model outputs for a features file.

use std::path::Path;

use ssdal_core::{binarize_threshold, binarize_top_p, forward, load_checkpoint};

use crate::config::RunConfig;
use crate::csvio::{read_features_csv, write_attributes_csv};
use crate::errors::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PredictPolicy {
    /// Exactly p positives per sample, from `label.p`.
    TopP,
    /// Every logit strictly above `label.tau`.
    Threshold,
}

pub fn run(
    cfg: &RunConfig,
    model: &Path,
    features: &Path,
    policy: PredictPolicy,
    out: &Path,
) -> CliResult<()> {
    let params = load_checkpoint(model)?;
    let table = read_features_csv(features)?;
    let trace = forward(&params, &table.features)?;
    let logits = trace.logits();

    let labels = match policy {
        PredictPolicy::TopP => {
            let p = cfg.require_usize("label.p")?;
            (0..logits.rows())
                .map(|r| binarize_top_p(logits.row(r), p))
                .collect::<ssdal_core::Result<Vec<_>>>()?
        }
        PredictPolicy::Threshold => {
            let tau = cfg.require_f64("label.tau")?;
            (0..logits.rows())
                .map(|r| binarize_threshold(logits.row(r), tau))
                .collect::<ssdal_core::Result<Vec<_>>>()?
        }
    };

    write_attributes_csv(out, &table.sample_ids, &labels)?;
    println!("predict: {} rows -> {}", labels.len(), out.display());
    Ok(())
}
