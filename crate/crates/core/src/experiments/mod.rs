//! End-to-end training runs, baselines, sweeps and report files.

pub mod certify;
pub mod plot;
pub mod report;
pub mod run;
pub mod scenario;
pub mod sweep;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, TaskKind};
use crate::error::Result;

pub use report::emit_reports;
pub use run::{
    bounds_from_records, run_experiment, run_iteration, run_scenario, IterationRecord, MetricTrace,
    RunOptions, RunOutcome, RunSummary, TrainingState,
};
pub use scenario::{DatasetSource, MnistSource, Scenario};
pub use sweep::{run_sweep, SweepAxis, SweepPoint};

/// Run length presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Finishes in minutes on a laptop.
    #[default]
    Desk,
    /// Longer MLP training with sparser evaluation.
    Long,
}

impl Profile {
    pub fn preset(self, task: TaskKind) -> ScenarioConfig {
        let mut cfg = match task {
            TaskKind::LinearRegression => ScenarioConfig::regression(),
            TaskKind::MlpClassifier => ScenarioConfig::mlp(),
        };
        if self == Profile::Long && task == TaskKind::MlpClassifier {
            cfg.training.num_iterations = 1000;
            cfg.training.eval_every = 10;
        }
        cfg
    }
}

/// Applies `f` to every item on all available cores; results keep input order.
pub fn parallel_map<I, T, F>(items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync,
{
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let value = f(&items[k]);
                slots.lock().expect("no worker panicked")[k] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|slot| slot.expect("every item processed"))
        .collect()
}

/// Runs every config and returns their summaries in input order.
pub fn run_batch(
    configs: Vec<ScenarioConfig>,
    mnist: Option<&MnistSource>,
) -> Result<Vec<RunSummary>> {
    parallel_map(&configs, |cfg| {
        Ok(run_experiment(cfg.clone(), mnist)?.summary)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order_and_propagates_errors() {
        let items: Vec<u32> = (0..50).collect();
        assert_eq!(
            parallel_map(&items, |&x| Ok(x * 2)).unwrap(),
            (0..50).map(|x| x * 2).collect::<Vec<_>>()
        );
        let err = parallel_map(&items, |&x| {
            if x == 7 {
                Err(crate::Error::config("boom"))
            } else {
                Ok(x)
            }
        });
        assert!(err.is_err());
    }

    #[test]
    fn long_profile_lengthens_mlp_only() {
        assert_eq!(
            Profile::Long
                .preset(TaskKind::MlpClassifier)
                .training
                .num_iterations,
            1000
        );
        assert_eq!(
            Profile::Long.preset(TaskKind::LinearRegression),
            Profile::Desk.preset(TaskKind::LinearRegression)
        );
    }
}
