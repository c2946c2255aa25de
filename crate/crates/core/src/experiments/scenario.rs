//! Turning a validated config into workers, datasets and reference values.

use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::config::{SampleBudget, ScenarioConfig, TaskKind};
use crate::data::{self, digits, stream_index, LabeledImages, SyntheticRegressionSpec};
use crate::error::Result;
use crate::learning::{Dataset, TaskModel};
use crate::model::{ModelParams, WorkerProfile};
use crate::rng::{RngStreams, StreamLabel};
use crate::PolicyKind;

/// Where the training samples came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    SyntheticRegression,
    Mnist,
    SyntheticDigits,
}

impl DatasetSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetSource::SyntheticRegression => "synthetic_regression",
            DatasetSource::Mnist => "mnist",
            DatasetSource::SyntheticDigits => "synthetic_digits",
        }
    }
}

/// Real digit images: a training pool and, optionally, a separate test set.
#[derive(Debug, Clone)]
pub struct MnistSource {
    pub train: LabeledImages,
    pub test: Option<LabeledImages>,
}

impl MnistSource {
    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        Ok(Self {
            train: LabeledImages::load(images, labels)?,
            test: None,
        })
    }

    pub fn with_test(mut self, images: &Path, labels: &Path) -> Result<Self> {
        self.test = Some(LabeledImages::load(images, labels)?);
        Ok(self)
    }
}

/// Exact minimizer of the pooled training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub model: ModelParams,
    pub loss: f64,
}

/// Everything fixed before the first iteration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: TaskModel,
    pub workers: Vec<WorkerProfile>,
    pub sample_counts: Vec<usize>,
    pub max_powers: Vec<f64>,
    /// Union of all local datasets; its loss is the global objective.
    pub pooled: Dataset,
    pub test: Option<Dataset>,
    pub source: DatasetSource,
    pub optimum: Option<Optimum>,
    pub regression_spec: Option<SyntheticRegressionSpec>,
    pub initial_model: ModelParams,
}

impl Scenario {
    /// Validates `config` and draws all data from its seed.
    pub fn prepare(config: ScenarioConfig, mnist: Option<&MnistSource>) -> Result<Self> {
        let config = config.validate()?;
        let streams = RngStreams::new(config.seed);
        let model = TaskModel::for_kind(config.task);
        let u = config.num_workers();
        let (datasets, test, source, spec) = match config.task {
            TaskKind::LinearRegression => {
                let spec = SyntheticRegressionSpec::from(&config.data);
                (
                    data::gen_synthetic(&spec, u, &streams)?,
                    None,
                    DatasetSource::SyntheticRegression,
                    Some(spec),
                )
            }
            TaskKind::MlpClassifier => {
                let (pool, test, source) = image_pools(&config, mnist, &streams)?;
                let mut rng = streams.stream(StreamLabel::Data, stream_index::PARTITION);
                let (_, sets) = data::partition_mnist(
                    &pool,
                    u,
                    config.data.mnist_samples,
                    config.data.mnist_budget,
                    &mut rng,
                )?;
                (sets, Some(test.all()?), source, None)
            }
        };
        let pooled = Dataset::concat(&datasets)?;
        let optimum = match config.task {
            TaskKind::LinearRegression => {
                let w = data::least_squares(&pooled)?;
                let loss = model.local_loss(&w, &pooled)?;
                Some(Optimum { model: w, loss })
            }
            TaskKind::MlpClassifier => None,
        };
        let max_powers = config.max_powers();
        let workers: Vec<WorkerProfile> = datasets
            .into_iter()
            .zip(&max_powers)
            .enumerate()
            .map(|(id, (dataset, &max_power))| WorkerProfile {
                id,
                max_power,
                dataset,
            })
            .collect();
        let sample_counts = workers.iter().map(WorkerProfile::sample_count).collect();
        let initial_model =
            model.init(&mut streams.stream(StreamLabel::Data, stream_index::MODEL_INIT));
        Ok(Self {
            config,
            model,
            workers,
            sample_counts,
            max_powers,
            pooled,
            test,
            source,
            optimum,
            regression_spec: spec,
            initial_model,
        })
    }

    pub fn with_policy(mut self, policy: PolicyKind) -> Self {
        self.config.policy = policy;
        self
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Global objective `F(w)`: the sample-weighted mean of local losses.
    pub fn global_loss(&self, model: &ModelParams) -> Result<f64> {
        self.model.local_loss(model, &self.pooled)
    }
}

/// Training pool and test images. Without real files both come from the
/// procedural digit generator.
fn image_pools(
    config: &ScenarioConfig,
    mnist: Option<&MnistSource>,
    streams: &RngStreams,
) -> Result<(LabeledImages, LabeledImages, DatasetSource)> {
    let held_out = config.data.test_samples;
    match mnist {
        Some(MnistSource {
            train,
            test: Some(test),
        }) => Ok((train.clone(), test.clone(), DatasetSource::Mnist)),
        Some(MnistSource { train, test: None }) => {
            let mut rng = streams.stream(StreamLabel::Data, stream_index::TEST_SET);
            let n = train.len();
            let chosen = index::sample(&mut rng, n, held_out.min(n / 2)).into_vec();
            let mut is_test = vec![false; n];
            chosen.iter().for_each(|&i| is_test[i] = true);
            let rest: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
            Ok((
                train.subset(&rest)?,
                train.subset(&chosen)?,
                DatasetSource::Mnist,
            ))
        }
        None => {
            let hi = config.data.mnist_samples[1];
            let pool_size = match config.data.mnist_budget {
                SampleBudget::Pooled => hi,
                SampleBudget::PerWorker => hi * config.num_workers(),
            };
            let mut rng = streams.stream(StreamLabel::Data, stream_index::FALLBACK_TRAIN);
            let pool = digits::generate(pool_size, &mut rng)?;
            let mut rng = streams.stream(StreamLabel::Data, stream_index::FALLBACK_TEST);
            let test = digits::generate(held_out, &mut rng)?;
            Ok((pool, test, DatasetSource::SyntheticDigits))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_scenario_has_optimum_and_counts() {
        let mut cfg = ScenarioConfig::regression();
        cfg.network.num_workers = 5;
        let s = Scenario::prepare(cfg, None).unwrap();
        assert_eq!(s.num_workers(), 5);
        assert_eq!(s.sample_counts.iter().sum::<usize>(), s.pooled.len());
        let opt = s.optimum.as_ref().unwrap();
        assert!(s.global_loss(&s.initial_model).unwrap() > opt.loss);
        assert_eq!(s.initial_model, ModelParams::zeros(2));
        assert_eq!(s.source, DatasetSource::SyntheticRegression);
    }

    #[test]
    fn digit_fallback_scenario() {
        let mut cfg = ScenarioConfig::mlp();
        cfg.data.test_samples = 50;
        let s = Scenario::prepare(cfg, None).unwrap();
        assert_eq!(s.source, DatasetSource::SyntheticDigits);
        assert!((500..=1000).contains(&s.pooled.len()));
        assert_eq!(s.test.as_ref().unwrap().len(), 50);
        assert_eq!(s.initial_model.len(), 50890);
    }

    #[test]
    fn held_out_split_is_disjoint_from_training_pool() {
        let mut rng = RngStreams::new(1).stream(StreamLabel::Data, 0);
        let images = digits::generate(1200, &mut rng).unwrap();
        let mut cfg = ScenarioConfig::mlp();
        cfg.data.test_samples = 100;
        let source = MnistSource {
            train: images,
            test: None,
        };
        let (pool, test, kind) = image_pools(&cfg, Some(&source), &RngStreams::new(2)).unwrap();
        assert_eq!(kind, DatasetSource::Mnist);
        assert_eq!(pool.len() + test.len(), 1200);
        assert_eq!(test.len(), 100);
    }
}
