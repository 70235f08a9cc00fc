use std::path::Path;

use anyhow::{Context, Result};
use sprb_core::env::enumerate_transitions;
use sprb_core::shaping::EpisodeShaper;
use sprb_core::verify::{check_pirf, SquarePlus};
use sprb_core::PirfReport;

use crate::config::VerifyConfig;
use crate::output::Outputs;

pub const TEXT_REPORT: &str = "verify_report.txt";
pub const JSON_REPORT: &str = "verify_report.json";
pub const TABLE_FILE: &str = "transitions.txt";

/// Runs every check and writes the text and JSON reports plus the
/// transition table.
pub fn run_verify(cfg: &VerifyConfig, out: &Path) -> Result<Vec<PirfReport>> {
    cfg.validate()?;
    let dynamics = cfg.env.build_dynamics()?;
    let table = enumerate_transitions(dynamics.as_ref()).context("enumerating transitions")?;
    let mut reports = Vec::new();
    for (i, check) in cfg.checks.iter().enumerate() {
        let canary;
        let shaper: &dyn EpisodeShaper = match (&check.shaping, check.square_plus) {
            (Some(s), _) => s,
            (None, Some(offset)) => {
                canary = SquarePlus { offset };
                &canary
            }
            (None, None) => unreachable!("validated"),
        };
        let report = check_pirf(&table, shaper, check.shaping.as_ref(), check.gamma, cfg.cap)
            .with_context(|| format!("checks[{i}]"))?;
        reports.push(report);
    }
    let mut outputs = Outputs::new();
    outputs.write(&out.join(TABLE_FILE), |w| Ok(table.write_text(w)?))?;
    let text: String = reports.iter().map(|r| r.to_text() + "\n").collect();
    outputs.write_str(&out.join(TEXT_REPORT), &text)?;
    outputs.write_str(
        &out.join(JSON_REPORT),
        &(serde_json::to_string_pretty(&reports)? + "\n"),
    )?;
    Ok(reports)
}
