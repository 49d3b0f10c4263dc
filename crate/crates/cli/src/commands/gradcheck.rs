//! `gradcheck`: finite-difference verification of every registered loss.

use ssdal_core::verification::{run_standard_gradient_checks, GRADIENT_CHECK_THRESHOLD};

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

use super::{ensure_dir, network_config, write_json_report};

pub fn execute(cfg: &RunConfig) -> CliResult<Vec<ssdal_core::LossCheckReport>> {
    let report_dir = cfg.require_path("report_dir")?;
    ensure_dir(&report_dir)?;
    let net_cfg = network_config(cfg)?;
    let num_seeds = cfg.usize_or("gradcheck.seeds", 20)?;
    let epsilon = cfg.f64_or("gradcheck.epsilon", 1e-5)?;
    let inject_fault = cfg.bool_or("gradcheck.inject_fault", false)?;
    let seeds: Vec<u64> = (0..num_seeds as u64).collect();

    let reports = run_standard_gradient_checks(&net_cfg, &seeds, epsilon, inject_fault)?;

    println!(
        "{:<26} {:>14} {:>7} {:>10} {:>6}",
        "loss", "max_rel_error", "seeds", "epsilon", "pass"
    );
    for r in &reports {
        println!(
            "{:<26} {:>14.3e} {:>7} {:>10.1e} {:>6}",
            r.loss,
            r.max_relative_error,
            r.seeds,
            r.epsilon,
            if r.pass { "yes" } else { "NO" }
        );
    }
    write_json_report(&report_dir.join("gradcheck_report.json"), &reports)?;

    if reports.iter().any(|r| !r.pass) {
        return Err(CliError::Verification(format!(
            "a loss exceeded the {GRADIENT_CHECK_THRESHOLD:.0e} gradient threshold"
        )));
    }
    Ok(reports)
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    execute(cfg).map(|_| ())
}
