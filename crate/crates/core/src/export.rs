//! CSV and greymap artifacts. All CSV uses `\n` line endings and Rust's
//! locale-independent float formatting.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{EpochMetrics, ProbabilityMap};
use crate::pgm;
use crate::samplers::TRACE_HEADER;

pub const METRICS_HEADER: &str = "epoch,train_acc,test_acc,loss,seconds";
pub const SUMMARY_HEADER: &str = "strategy,seed,test_acc";
pub const FOCUS_HEADER: &str = "epoch,truth_hit_rate";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub seed: u64,
    pub test_acc: f64,
}

/// `metrics.csv` body. With `with_timing = false` the seconds column is 0,
/// which makes the file a pure function of config and seed.
pub fn metrics_csv(metrics: &[EpochMetrics], with_timing: bool) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for m in metrics {
        let secs = if with_timing { m.seconds } else { 0.0 };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            m.epoch, m.train_acc, m.test_acc, m.mean_loss, secs
        );
    }
    out
}

pub fn timing_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,seconds\n");
    for m in metrics {
        let _ = writeln!(out, "{},{}", m.epoch, m.seconds);
    }
    out
}

pub fn focus_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = format!("{FOCUS_HEADER}\n");
    for m in metrics {
        let rate = m.truth_hit_rate.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{rate}", m.epoch);
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.strategy, r.seed, r.test_acc);
    }
    out
}

pub fn traces_csv(rows: &str) -> String {
    format!("{TRACE_HEADER}\n{rows}")
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_map(path: impl AsRef<Path>, map: &ProbabilityMap) -> Result<()> {
    pgm::write(path, &map.to_image())
}

/// Write every artifact of one training run into `outdir`.
pub fn export_artifacts(
    outdir: impl AsRef<Path>,
    metrics: &[EpochMetrics],
    maps: &[(String, ProbabilityMap)],
    traces: &str,
    with_timing: bool,
) -> Result<()> {
    let outdir = outdir.as_ref();
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    write_text(
        outdir.join("metrics.csv"),
        &metrics_csv(metrics, with_timing),
    )?;
    if !with_timing {
        write_text(outdir.join("timing.csv"), &timing_csv(metrics))?;
    }
    write_text(outdir.join("focus.csv"), &focus_csv(metrics))?;
    if !traces.is_empty() {
        write_text(outdir.join("traces.csv"), &traces_csv(traces))?;
    }
    for (name, map) in maps {
        write_map(outdir.join(format!("{name}.map.pgm")), map)?;
    }
    Ok(())
}
