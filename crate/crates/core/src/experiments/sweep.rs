//! One-axis parameter sweeps over policies and seeds.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{PolicyKind, ScenarioConfig, TaskKind};
use crate::error::{Error, Result};

use super::plot::LineChart;
use super::run::RunSummary;
use super::scenario::MnistSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Number of workers `U`.
    Workers,
    /// Receiver noise variance `σ²` in milliwatts.
    NoiseVariance,
    /// Mean per-worker sample count; the range spans half to one and a half times it.
    SamplesPerWorker,
}

/// Direction a metric is expected to move as the axis value grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Nonincreasing,
    Nondecreasing,
    Flat,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Workers => "workers",
            SweepAxis::NoiseVariance => "noise_variance",
            SweepAxis::SamplesPerWorker => "samples_per_worker",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Workers => vec![10.0, 20.0, 30.0, 40.0],
            SweepAxis::NoiseVariance => vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            SweepAxis::SamplesPerWorker => vec![10.0, 20.0, 40.0, 80.0],
        }
    }

    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::Workers => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config(format!(
                        "worker count {value} is not a positive integer"
                    )));
                }
                cfg.network.num_workers = value as usize;
            }
            SweepAxis::NoiseVariance => cfg.network.noise_variance_mw = value,
            SweepAxis::SamplesPerWorker => {
                if cfg.task != TaskKind::LinearRegression {
                    return Err(Error::config(
                        "the samples-per-worker sweep applies to the regression task",
                    ));
                }
                let lo = (value / 2.0).round().max(1.0) as usize;
                let hi = (1.5 * value).round().max(lo as f64) as usize;
                cfg.data.samples_per_worker = [lo, hi];
            }
        }
        Ok(())
    }

    /// Expected direction of the final error along this axis.
    pub fn expected_trend(self, policy: PolicyKind) -> Trend {
        match (self, policy) {
            (SweepAxis::NoiseVariance, PolicyKind::Perfect) => Trend::Flat,
            (SweepAxis::NoiseVariance, _) => Trend::Nondecreasing,
            _ => Trend::Nonincreasing,
        }
    }

    fn log_scale(self) -> bool {
        matches!(self, SweepAxis::NoiseVariance)
    }
}

/// Error metric compared across sweep points: the exact test MSE for the
/// regression task, otherwise the final training loss. Diverged runs count
/// as infinite.
pub fn sweep_metric(summary: &RunSummary) -> f64 {
    if summary.diverged_at.is_some() {
        f64::INFINITY
    } else {
        summary.final_test_mse.unwrap_or(summary.final_loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: SweepAxis,
    pub value: f64,
    pub policy: PolicyKind,
    pub seeds: Vec<u64>,
    pub metrics: Vec<f64>,
    pub mean: f64,
}

/// Runs every `(value, policy, seed)` combination; seeds are shared across
/// values so each curve compares like with like.
pub fn run_sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    policies: &[PolicyKind],
    seeds: &[u64],
    mnist: Option<&MnistSource>,
) -> Result<Vec<SweepPoint>> {
    let mut configs = Vec::new();
    for &value in values {
        for &policy in policies {
            for &seed in seeds {
                let mut cfg = base.clone();
                axis.apply(&mut cfg, value)?;
                cfg.policy = policy;
                cfg.seed = seed;
                configs.push(cfg);
            }
        }
    }
    let summaries = super::run_batch(configs, mnist)?;
    let mut chunks = summaries.chunks_exact(seeds.len());
    let mut points = Vec::new();
    for &value in values {
        for &policy in policies {
            let chunk = chunks.next().expect("one chunk per grid cell");
            let metrics: Vec<f64> = chunk.iter().map(sweep_metric).collect();
            let mean = metrics.iter().sum::<f64>() / metrics.len() as f64;
            points.push(SweepPoint {
                axis,
                value,
                policy,
                seeds: seeds.to_vec(),
                metrics,
                mean,
            });
        }
    }
    Ok(points)
}

/// Means of one policy's curve, in axis order.
pub fn curve(points: &[SweepPoint], policy: PolicyKind) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|p| p.policy == policy)
        .map(|p| (p.value, p.mean))
        .collect()
}

/// Adjacent pairs moving against `trend`. For [`Trend::Flat`], pairs whose
/// relative change exceeds `flat_tolerance`.
pub fn count_inversions(means: &[f64], trend: Trend, flat_tolerance: f64) -> usize {
    means
        .windows(2)
        .filter(|w| match trend {
            Trend::Nonincreasing => w[1] > w[0],
            Trend::Nondecreasing => w[1] < w[0],
            Trend::Flat => (w[1] - w[0]).abs() > flat_tolerance * w[0].abs().max(w[1].abs()),
        })
        .count()
}

#[derive(Debug, Serialize)]
struct SweepRow {
    axis: SweepAxis,
    value: f64,
    policy: PolicyKind,
    mean: f64,
    seeds: usize,
}

pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for p in points {
        w.serialize(SweepRow {
            axis: p.axis,
            value: p.value,
            policy: p.policy,
            mean: p.mean,
            seeds: p.seeds.len(),
        })
        .map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn sweep_chart(points: &[SweepPoint], axis: SweepAxis, policies: &[PolicyKind]) -> LineChart {
    let chart = LineChart::new(
        format!("Final error vs {}", axis.as_str()),
        axis.as_str(),
        "final MSE",
    )
    .log_y();
    let chart = if axis.log_scale() {
        chart.log_x()
    } else {
        chart
    };
    policies.iter().fold(chart, |chart, &p| {
        chart.with_series(p.as_str(), curve(points, p))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_application() {
        let mut cfg = ScenarioConfig::regression();
        SweepAxis::Workers.apply(&mut cfg, 30.0).unwrap();
        assert_eq!(cfg.network.num_workers, 30);
        SweepAxis::SamplesPerWorker.apply(&mut cfg, 20.0).unwrap();
        assert_eq!(cfg.data.samples_per_worker, [10, 30]);
        SweepAxis::NoiseVariance.apply(&mut cfg, 0.5).unwrap();
        assert_eq!(cfg.network.noise_variance_mw, 0.5);
        assert!(SweepAxis::Workers.apply(&mut cfg, 2.5).is_err());
        let mut mlp = ScenarioConfig::mlp();
        assert!(SweepAxis::SamplesPerWorker.apply(&mut mlp, 20.0).is_err());
    }

    #[test]
    fn inversion_counting() {
        assert_eq!(
            count_inversions(&[4.0, 3.0, 3.0, 1.0], Trend::Nonincreasing, 0.0),
            0
        );
        assert_eq!(
            count_inversions(&[4.0, 5.0, 3.0, 3.5], Trend::Nonincreasing, 0.0),
            2
        );
        assert_eq!(
            count_inversions(&[1.0, 2.0, 1.5], Trend::Nondecreasing, 0.0),
            1
        );
        assert_eq!(
            count_inversions(&[1.0, 1.0 + 1e-12, 1.0], Trend::Flat, 1e-9),
            0
        );
        assert_eq!(count_inversions(&[1.0, 1.1], Trend::Flat, 1e-9), 1);
    }

    #[test]
    fn small_sweep_shape() {
        let mut base = ScenarioConfig::regression();
        base.training.num_iterations = 50;
        let points = run_sweep(
            &base,
            SweepAxis::Workers,
            &[2.0, 4.0],
            &[PolicyKind::Perfect, PolicyKind::Inflota],
            &[1, 2],
            None,
        )
        .unwrap();
        assert_eq!(points.len(), 4);
        assert!(points
            .iter()
            .all(|p| p.metrics.len() == 2 && p.mean.is_finite()));
        assert_eq!(curve(&points, PolicyKind::Inflota).len(), 2);
    }
}
