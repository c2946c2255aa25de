//! Run artifacts: `metrics.csv`, `summary.json`, `bounds.csv` and SVG plots.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::plot::LineChart;
use super::run::{IterationRecord, RunOutcome, RunSummary};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BOUNDS_FILE: &str = "bounds.csv";
pub const LOSS_PLOT_FILE: &str = "loss.svg";

pub fn write_metrics(records: &[IterationRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in records {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<IterationRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(BufReader::new(file))
        .deserialize()
        .map(|r| r.map_err(|e| Error::format(path, e)))
        .collect()
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::format(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_svg(chart: &LineChart, path: &Path) -> Result<()> {
    fs::write(path, chart.to_svg()).map_err(|e| Error::io(path, e))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes every artifact of one run into `dir` and returns the file paths.
pub fn emit_reports(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare_dir(dir)?;
    let metrics = dir.join(METRICS_FILE);
    write_metrics(&outcome.trace.records, &metrics)?;
    let summary = dir.join(SUMMARY_FILE);
    write_summary(&outcome.summary, &summary)?;
    let bounds = dir.join(BOUNDS_FILE);
    outcome.bounds.save_csv(&bounds)?;
    let plot = dir.join(LOSS_PLOT_FILE);
    let losses = outcome
        .trace
        .losses()
        .into_iter()
        .map(|(t, l)| (t as f64, l))
        .collect();
    let chart = LineChart::new(
        format!("Training loss ({})", outcome.summary.policy.as_str()),
        "iteration",
        "loss",
    )
    .log_y()
    .with_series(outcome.summary.policy.as_str(), losses);
    write_svg(&chart, &plot)?;
    Ok(vec![metrics, summary, bounds, plot])
}

/// Loss curves of several runs on one chart.
pub fn comparison_chart(title: &str, outcomes: &[&RunOutcome]) -> LineChart {
    outcomes.iter().fold(
        LineChart::new(title, "iteration", "loss").log_y(),
        |chart, o| {
            let points = o
                .trace
                .losses()
                .into_iter()
                .map(|(t, l)| (t as f64, l))
                .collect();
            chart.with_series(o.summary.policy.as_str(), points)
        },
    )
}
