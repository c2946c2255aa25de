//! Scenario configuration and its validation.
//!
//! A scenario file is TOML with one section per concern. Power and noise
//! quantities are linear milliwatts throughout; decibels appear only in
//! reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::TaskModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LinearRegression,
    MlpClassifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Per-entry line search over the scheduler's candidate set.
    Inflota,
    /// Uniform random nonempty selection and a random feasible scaling factor.
    Random,
    /// Error-free, noiseless averaging of every worker.
    Perfect,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Perfect, PolicyKind::Inflota, PolicyKind::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Inflota => "inflota",
            PolicyKind::Random => "random",
            PolicyKind::Perfect => "perfect",
        }
    }
}

/// How the scheduler bounds the unobservable local update `|w_{t-1} - w_{i,t}|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EtaMode {
    Fixed {
        value: f64,
    },
    /// `|w_{t-1} - w_{t-2}|` per entry; `fallback` until two global models exist.
    AdaptiveDiff {
        fallback: f64,
    },
}

impl EtaMode {
    fn constant(&self) -> f64 {
        match *self {
            EtaMode::Fixed { value } => value,
            EtaMode::AdaptiveDiff { fallback } => fallback,
        }
    }
}

/// Fading granularity within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// Independent gain per (worker, iteration, entry).
    PerEntry,
    /// One gain per (worker, iteration), shared by every entry.
    PerIteration,
}

/// Reading of the "samples drawn" range for MNIST.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleBudget {
    /// The range bounds the pooled total across all workers.
    Pooled,
    /// The range bounds each worker's own sample count.
    PerWorker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerSpec {
    Uniform(f64),
    PerWorker(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_workers: usize,
    /// `P_i^Max` in milliwatts.
    pub max_power_mw: PowerSpec,
    /// `σ²` in milliwatts.
    pub noise_variance_mw: f64,
    #[serde(default = "default_fading")]
    pub fading: FadingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub num_iterations: usize,
    /// Must match the task layout when given.
    #[serde(default)]
    pub model_dim: Option<usize>,
    /// Test metrics are evaluated every this many iterations (and at the last one).
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_lipschitz")]
    pub lipschitz: f64,
    #[serde(default = "default_strong_convexity")]
    pub strong_convexity: f64,
    #[serde(default = "default_rho1")]
    pub rho1: f64,
    /// Defaults to `1/D`.
    #[serde(default)]
    pub rho2: Option<f64>,
    /// Require the convex convergence condition `0 < ρ₂ ≤ 1/D`.
    #[serde(default)]
    pub certify: bool,
    /// Constant of the non-convex condition; defaults to `2μ`.
    #[serde(default)]
    pub nonconvex_g: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            lipschitz: default_lipschitz(),
            strong_convexity: default_strong_convexity(),
            rho1: default_rho1(),
            rho2: None,
            certify: false,
            nonconvex_g: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    #[serde(default = "default_eta")]
    pub eta: EtaMode,
    /// Scaling factor used when `|w_{t-1}| + η = 0` leaves the candidate set unbounded.
    #[serde(default = "default_b_ceiling")]
    pub b_ceiling: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            b_ceiling: default_b_ceiling(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Inclusive range of per-worker sample counts (synthetic regression).
    #[serde(default = "default_samples_per_worker")]
    pub samples_per_worker: [usize; 2],
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_intercept")]
    pub intercept: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    /// Inclusive range of MNIST training samples drawn.
    #[serde(default = "default_mnist_samples")]
    pub mnist_samples: [usize; 2],
    #[serde(default = "default_sample_budget")]
    pub mnist_budget: SampleBudget,
    /// Held-out samples used when no real test set is supplied.
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            samples_per_worker: default_samples_per_worker(),
            slope: default_slope(),
            intercept: default_intercept(),
            noise_scale: default_noise_scale(),
            mnist_samples: default_mnist_samples(),
            mnist_budget: default_sample_budget(),
            test_samples: default_test_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub policy: PolicyKind,
    pub task: TaskKind,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub data: DataConfig,
}

fn default_fading() -> FadingMode {
    FadingMode::PerEntry
}
fn default_eval_every() -> usize {
    1
}
fn default_lipschitz() -> f64 {
    1.0
}
fn default_strong_convexity() -> f64 {
    0.1
}
fn default_rho1() -> f64 {
    1.0
}
fn default_eta() -> EtaMode {
    EtaMode::AdaptiveDiff { fallback: 0.1 }
}
fn default_b_ceiling() -> f64 {
    1e3
}
fn default_samples_per_worker() -> [usize; 2] {
    [10, 50]
}
fn default_slope() -> f64 {
    -2.0
}
fn default_intercept() -> f64 {
    1.0
}
fn default_noise_scale() -> f64 {
    0.4
}
fn default_mnist_samples() -> [usize; 2] {
    [500, 1000]
}
fn default_sample_budget() -> SampleBudget {
    SampleBudget::Pooled
}
fn default_test_samples() -> usize {
    2000
}

impl ScenarioConfig {
    /// Linear regression on `y = -2x + 1 + 0.4n` with 20 workers at 10 mW and
    /// σ² = 1e-4 mW, learning rate 0.01.
    pub fn regression() -> Self {
        Self {
            seed: 0,
            policy: PolicyKind::Inflota,
            task: TaskKind::LinearRegression,
            network: NetworkConfig {
                num_workers: 20,
                max_power_mw: PowerSpec::Uniform(10.0),
                noise_variance_mw: 1e-4,
                fading: FadingMode::PerEntry,
            },
            training: TrainingConfig {
                learning_rate: 0.01,
                num_iterations: 10_000,
                model_dim: None,
                eval_every: 1,
            },
            analysis: AnalysisConfig::default(),
            scheduler: SchedulerConfig::default(),
            data: DataConfig::default(),
        }
    }

    /// 784-64-10 MLP on MNIST with 20 workers, learning rate 0.1, desk-scale length.
    pub fn mlp() -> Self {
        Self {
            task: TaskKind::MlpClassifier,
            training: TrainingConfig {
                learning_rate: 0.1,
                num_iterations: 100,
                model_dim: None,
                eval_every: 5,
            },
            ..Self::regression()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config is always serializable")
    }

    pub fn num_workers(&self) -> usize {
        self.network.num_workers
    }

    pub fn model_dim(&self) -> usize {
        self.training
            .model_dim
            .unwrap_or_else(|| TaskModel::for_kind(self.task).dim())
    }

    /// `P_i^Max` for every worker, in milliwatts.
    pub fn max_powers(&self) -> Vec<f64> {
        match &self.network.max_power_mw {
            PowerSpec::Uniform(p) => vec![*p; self.network.num_workers],
            PowerSpec::PerWorker(v) => v.clone(),
        }
    }

    pub fn noise_variance(&self) -> f64 {
        self.network.noise_variance_mw
    }

    pub fn rho2(&self) -> f64 {
        self.analysis
            .rho2
            .unwrap_or_else(|| 1.0 / self.model_dim() as f64)
    }

    pub fn nonconvex_g(&self) -> f64 {
        self.analysis
            .nonconvex_g
            .unwrap_or(2.0 * self.analysis.strong_convexity)
    }

    /// Linear SNR `P^Max / σ²` of the first worker, for reporting.
    pub fn snr_linear(&self) -> f64 {
        self.max_powers().first().copied().unwrap_or(0.0) / self.noise_variance()
    }

    /// Returns the config unchanged if every constraint holds, otherwise one
    /// message per violated constraint.
    pub fn validate(self) -> Result<Self> {
        let errors = self.violations();
        if errors.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let a = &self.analysis;
        let d = self.model_dim();

        if self.network.num_workers == 0 {
            errs.push("U > 0 violated".to_string());
        }
        if d == 0 {
            errs.push("D > 0 violated".to_string());
        }
        if let Some(dim) = self.training.model_dim {
            let layout = TaskModel::for_kind(self.task).dim();
            if dim != layout {
                errs.push(format!(
                    "model_dim {dim} does not match task layout {layout}"
                ));
            }
        }
        if self.training.num_iterations == 0 {
            errs.push("T > 0 violated".to_string());
        }
        if !(self.training.learning_rate > 0.0 && self.training.learning_rate.is_finite()) {
            errs.push("α > 0 violated".to_string());
        }
        if self.training.eval_every == 0 {
            errs.push("eval_every > 0 violated".to_string());
        }
        if !(self.network.noise_variance_mw >= 0.0 && self.network.noise_variance_mw.is_finite()) {
            errs.push("σ² ≥ 0 violated".to_string());
        }
        let powers = self.max_powers();
        if powers.len() != self.network.num_workers {
            errs.push(format!(
                "max_power_mw lists {} workers, expected {}",
                powers.len(),
                self.network.num_workers
            ));
        }
        if powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            errs.push("P_i^Max > 0 violated".to_string());
        }
        errs.extend(assumption_violations(a, self.rho2(), d));
        let eta = self.scheduler.eta.constant();
        if !(eta >= 0.0 && eta.is_finite()) {
            errs.push("η ≥ 0 violated".to_string());
        }
        if !(self.scheduler.b_ceiling > 0.0 && self.scheduler.b_ceiling.is_finite()) {
            errs.push("b_ceiling > 0 violated".to_string());
        }
        let [lo, hi] = self.data.samples_per_worker;
        if lo == 0 || lo > hi {
            errs.push("samples_per_worker must be a nonempty range of positive counts".to_string());
        }
        let [lo, hi] = self.data.mnist_samples;
        if lo == 0 || lo > hi {
            errs.push("mnist_samples must be a nonempty range of positive counts".to_string());
        }
        if !(self.data.noise_scale >= 0.0) {
            errs.push("noise_scale ≥ 0 violated".to_string());
        }
        errs
    }
}

/// Constraints on the smoothness, strong convexity and gradient-dissimilarity
/// constants for a model of dimension `dim`.
pub fn assumption_violations(a: &AnalysisConfig, rho2: f64, dim: usize) -> Vec<String> {
    let mut errs = Vec::new();
    if !(a.lipschitz > 0.0 && a.lipschitz.is_finite()) {
        errs.push("L > 0 violated".to_string());
    }
    if !(a.strong_convexity > 0.0) {
        errs.push("μ > 0 violated".to_string());
    }
    if a.strong_convexity > a.lipschitz {
        errs.push("μ ≤ L violated".to_string());
    }
    if !(a.rho1 >= 0.0) {
        errs.push("ρ₁ ≥ 0 violated".to_string());
    }
    if !(rho2 >= 0.0) {
        errs.push("ρ₂ ≥ 0 violated".to_string());
    }
    if a.certify && dim > 0 {
        if !(rho2 > 0.0) {
            errs.push("ρ₂ > 0 violated".to_string());
        }
        if rho2 > 1.0 / dim as f64 {
            errs.push("ρ₂ ≤ 1/D violated".to_string());
        }
    }
    if let Some(g) = a.nonconvex_g {
        if !(g > 0.0) {
            errs.push("𝒢 > 0 violated".to_string());
        }
    }
    errs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(l: f64, mu: f64, rho2: f64, certify: bool) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::regression();
        cfg.analysis.lipschitz = l;
        cfg.analysis.strong_convexity = mu;
        cfg.analysis.rho2 = Some(rho2);
        cfg.analysis.certify = certify;
        cfg
    }

    #[test]
    fn boundary_values_are_valid() {
        // D = 2 for regression, so ρ₂ = 1/D = 0.5
        let cfg = small(1.0, 1.0, 0.5, true);
        assert_eq!(cfg.clone().validate().unwrap(), cfg);
    }

    #[test]
    fn mu_above_l_rejected() {
        let err = small(1.0, 2.0, 0.5, false).validate().unwrap_err();
        match err {
            Error::Config(list) => assert!(list.iter().any(|m| m == "μ ≤ L violated")),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn rho2_above_inverse_dim_rejected_with_certification() {
        let mut a = AnalysisConfig {
            lipschitz: 1.0,
            certify: true,
            ..Default::default()
        };
        let v = assumption_violations(&a, 0.3, 4);
        assert_eq!(v, vec!["ρ₂ ≤ 1/D violated".to_string()]);
        assert!(assumption_violations(&a, 0.25, 4).is_empty());
        a.certify = false;
        assert!(assumption_violations(&a, 0.3, 4).is_empty());

        let mut mlp = ScenarioConfig::mlp();
        mlp.analysis.rho2 = Some(0.3);
        mlp.analysis.certify = true;
        assert!(mlp.violations().iter().any(|m| m == "ρ₂ ≤ 1/D violated"));
    }

    #[test]
    fn collects_every_violation() {
        let mut cfg = small(1.0, 2.0, 0.5, false);
        cfg.training.learning_rate = 0.0;
        cfg.training.num_iterations = 0;
        cfg.network.num_workers = 0;
        cfg.network.max_power_mw = PowerSpec::Uniform(10.0);
        let v = cfg.violations();
        for needle in [
            "μ ≤ L violated",
            "α > 0 violated",
            "T > 0 violated",
            "U > 0 violated",
        ] {
            assert!(v.iter().any(|m| m == needle), "missing {needle} in {v:?}");
        }
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let text = r#"
            seed = 7
            policy = "inflota"
            task = "linear_regression"
            [network]
            num_workers = 4
            max_power_mw = 10.0
            noise_variance_mw = 1e-4
            [training]
            learning_rate = 0.01
            num_iterations = 50
        "#;
        let cfg = ScenarioConfig::from_toml_str(text)
            .unwrap()
            .validate()
            .unwrap();
        assert_eq!(cfg.analysis.lipschitz, 1.0);
        assert_eq!(cfg.analysis.strong_convexity, 0.1);
        assert_eq!(cfg.analysis.rho1, 1.0);
        assert_eq!(cfg.rho2(), 0.5);
        assert_eq!(cfg.max_powers(), vec![10.0; 4]);
        assert_eq!(cfg.scheduler.eta, EtaMode::AdaptiveDiff { fallback: 0.1 });
    }

    #[test]
    fn missing_mandatory_field_rejected() {
        let text = r#"
            seed = 7
            policy = "inflota"
            task = "linear_regression"
            [network]
            num_workers = 4
            max_power_mw = 10.0
            [training]
            learning_rate = 0.01
            num_iterations = 50
        "#;
        assert!(ScenarioConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::mlp();
        cfg.network.max_power_mw = PowerSpec::PerWorker((1..=20).map(f64::from).collect());
        cfg.scheduler.eta = EtaMode::Fixed { value: 0.25 };
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn per_worker_power_length_checked() {
        let mut cfg = ScenarioConfig::regression();
        cfg.network.max_power_mw = PowerSpec::PerWorker(vec![1.0; 3]);
        assert!(!cfg.violations().is_empty());
    }
}
