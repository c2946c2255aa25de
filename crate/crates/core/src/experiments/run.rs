//! The training loop: local updates, scheduling, uplink and global estimate.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{coeff_a, coeff_b, BoundConstants, BoundTrace, CoeffB, IterationBoundInputs};
use crate::channel::{self, ChannelRealization, SchedulingDecision};
use crate::config::{PolicyKind, ScenarioConfig, TaskKind};
use crate::data;
use crate::error::{Error, Result};
use crate::learning::ideal_global_aggregate;
use crate::model::ModelParams;
use crate::rng::{RngStreams, StreamLabel};
use crate::scheduler::{compute_eta, max_scaling, solve_p4, SchedulerInput};

use super::scenario::{DatasetSource, MnistSource, Scenario};

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Global training loss `F(w_t)`; only on evaluation iterations for the MLP.
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    /// Mean number of workers transmitting each entry.
    pub selected_mean: f64,
    /// Mean scaling factor over entries; absent without an analog uplink.
    pub b_mean: Option<f64>,
    #[serde(rename = "A_t")]
    pub a: f64,
    /// Absent when some entry had no transmitter.
    #[serde(rename = "B_t")]
    pub b: Option<f64>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTrace {
    pub records: Vec<IterationRecord>,
}

impl MetricTrace {
    /// Last recorded loss.
    pub fn final_loss(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.loss)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.accuracy)
    }

    pub fn losses(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.loss.map(|l| (r.t, l)))
            .collect()
    }
}

/// Uplink bookkeeping across a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmitStats {
    /// Selected (worker, entry) transmissions.
    pub transmissions: u64,
    /// Transmissions whose amplitude hit the power cap.
    pub clamped: u64,
}

/// The parameter server's view between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    /// Iterations completed.
    pub t: usize,
    /// `w_{t}`: the latest global estimate, broadcast error-free.
    pub global: ModelParams,
    /// `w_{t−1}`, for the adaptive bound on local change.
    pub previous: Option<ModelParams>,
    pub stats: TransmitStats,
}

impl TrainingState {
    pub fn new(initial: ModelParams) -> Self {
        Self {
            t: 0,
            global: initial,
            previous: None,
            stats: TransmitStats::default(),
        }
    }
}

/// Scheduling summary of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub selected_mean: f64,
    pub b_mean: Option<f64>,
    pub a: f64,
    pub b: CoeffB,
}

pub fn bound_constants(cfg: &ScenarioConfig) -> BoundConstants {
    BoundConstants {
        lipschitz: cfg.analysis.lipschitz,
        strong_convexity: cfg.analysis.strong_convexity,
        noise_variance: cfg.noise_variance(),
        rho1: cfg.analysis.rho1,
        rho2: cfg.rho2(),
    }
}

fn scheduler_input<'a>(
    scn: &'a Scenario,
    state: &TrainingState,
    entry: usize,
    gains: &'a [f64],
) -> SchedulerInput<'a> {
    let cfg = &scn.config;
    let prev = state.global.0[entry];
    let prev2 = state.previous.as_ref().map(|p| p.0[entry]);
    SchedulerInput {
        prev_global: prev,
        eta: compute_eta(Some(prev), prev2, cfg.scheduler.eta),
        gains,
        sample_counts: &scn.sample_counts,
        max_powers: &scn.max_powers,
        lipschitz: cfg.analysis.lipschitz,
        noise_variance: cfg.noise_variance(),
        rho1: cfg.analysis.rho1,
        b_ceiling: cfg.scheduler.b_ceiling,
    }
}

/// INFLOTA: per-entry line search.
fn decide_inflota(
    scn: &Scenario,
    state: &TrainingState,
    channel: &ChannelRealization,
) -> Result<SchedulingDecision> {
    let (u, dim) = (scn.num_workers(), scn.dim());
    let mut scaling = Vec::with_capacity(dim);
    let mut selected = Vec::with_capacity(dim * u);
    let mut gains = vec![0.0; u];
    for d in 0..dim {
        for (i, g) in gains.iter_mut().enumerate() {
            *g = channel.gain(i, d);
        }
        let point = solve_p4(&scheduler_input(scn, state, d, &gains))?;
        scaling.push(point.scaling);
        selected.extend_from_slice(&point.selection);
    }
    SchedulingDecision::new(scaling, selected, u)
}

/// Policy stream index of worker `slot`'s selection bits in round `t`.
fn policy_stream(t: u64, slot: u64) -> u64 {
    (t << 16) | slot
}

/// Slot of the scaling-factor draws, above any worker index.
const SCALE_SLOT: u64 = 0xFFFF;

/// Random baseline: each worker joins with probability 1/2 (empty draws are
/// redrawn) and `b` is uniform on `(0, min_selected b_i^Max]`.
///
/// Every worker's coin flips and the scaling draws use their own streams, so
/// the first `U` workers flip the same coins for any larger `U`.
fn decide_random(
    scn: &Scenario,
    state: &TrainingState,
    channel: &ChannelRealization,
    streams: &RngStreams,
    t: u64,
) -> Result<SchedulingDecision> {
    let (u, dim) = (scn.num_workers(), scn.dim());
    let mut coins: Vec<_> = (0..u as u64)
        .map(|i| streams.stream(StreamLabel::Policy, policy_stream(t, i)))
        .collect();
    let mut scale_rng = streams.stream(StreamLabel::Policy, policy_stream(t, SCALE_SLOT));
    let mut scaling = Vec::with_capacity(dim);
    let mut selected = Vec::with_capacity(dim * u);
    let mut gains = vec![0.0; u];
    let mut pick = vec![false; u];
    for d in 0..dim {
        for (i, g) in gains.iter_mut().enumerate() {
            *g = channel.gain(i, d);
        }
        let input = scheduler_input(scn, state, d, &gains);
        loop {
            for (p, rng) in pick.iter_mut().zip(coins.iter_mut()) {
                *p = rng.random_bool(0.5);
            }
            if pick.iter().any(|&p| p) {
                break;
            }
        }
        let limit = if input.is_degenerate() {
            input.b_ceiling
        } else {
            let mut m = f64::INFINITY;
            for (i, _) in pick.iter().enumerate().filter(|(_, p)| **p) {
                m = m.min(max_scaling(i, &input)?);
            }
            m
        };
        let draw: f64 = scale_rng.random();
        scaling.push(limit * (1.0 - draw));
        selected.extend_from_slice(&pick);
    }
    SchedulingDecision::new(scaling, selected, u)
}

/// Analog uplink of every local model followed by the parameter server's rescaling.
fn over_the_air<R: Rng + ?Sized>(
    scn: &Scenario,
    locals: &[ModelParams],
    decision: &SchedulingDecision,
    channel: &ChannelRealization,
    stats: &mut TransmitStats,
    noise_rng: &mut R,
) -> Result<ModelParams> {
    let dim = scn.dim();
    let mut amplitudes = Vec::with_capacity(scn.num_workers() * dim);
    for (i, (local, worker)) in locals.iter().zip(&scn.workers).enumerate() {
        let k = scn.sample_counts[i];
        let cap = channel::amplitude_cap(worker.max_power);
        for d in 0..dim {
            let selected = decision.is_selected(i, d);
            let (h, b, w) = (channel.gain(i, d), decision.scaling()[d], local.0[d]);
            let amp = channel::transmit_amplitude(w, k, b, h, selected, worker.max_power)?;
            if amp * amp > worker.max_power {
                return Err(Error::Channel(format!(
                    "worker {i} entry {d}: power {} exceeds cap {}",
                    amp * amp,
                    worker.max_power
                )));
            }
            if selected {
                stats.transmissions += 1;
                if k as f64 * b * w.abs() / h > cap {
                    stats.clamped += 1;
                }
            }
            amplitudes.push(amp);
        }
    }
    let received = channel::superpose(&amplitudes, channel, noise_rng)?;
    channel::ps_estimate(&received, decision, &scn.sample_counts)
}

/// One round: local updates from the broadcast model, scheduling, uplink, and
/// the new global estimate. Channel, noise and policy draws for round `t`
/// come from stream index `t`, so policies and noise levels share them.
pub fn run_iteration(
    scn: &Scenario,
    streams: &RngStreams,
    state: &mut TrainingState,
) -> Result<IterationOutcome> {
    let cfg = &scn.config;
    let t = state.t as u64 + 1;
    let locals = scn
        .workers
        .iter()
        .map(|w| {
            scn.model
                .local_update(&state.global, &w.dataset, cfg.training.learning_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    let constants = bound_constants(cfg);
    let (u, dim) = (scn.num_workers(), scn.dim());

    let (next, outcome) = if cfg.policy == PolicyKind::Perfect {
        let next = ideal_global_aggregate(&locals, &scn.sample_counts)?;
        let full = vec![true; u * dim];
        let ones = vec![1.0; dim];
        let input = IterationBoundInputs::new(&full, &ones, &scn.sample_counts, constants)?;
        let outcome = IterationOutcome {
            selected_mean: u as f64,
            b_mean: None,
            a: coeff_a(&input),
            b: CoeffB::Finite(0.0),
        };
        (next, outcome)
    } else {
        let channel = channel::draw_channel(
            u,
            dim,
            cfg.network.fading,
            cfg.noise_variance(),
            &mut streams.stream(StreamLabel::Channel, t),
        );
        let decision = match cfg.policy {
            PolicyKind::Inflota => decide_inflota(scn, state, &channel)?,
            _ => decide_random(scn, state, &channel, streams, t)?,
        };
        let next = over_the_air(
            scn,
            &locals,
            &decision,
            &channel,
            &mut state.stats,
            &mut streams.stream(StreamLabel::Noise, t),
        )?;
        let input = IterationBoundInputs::from_decision(&decision, &scn.sample_counts, constants)?;
        let outcome = IterationOutcome {
            selected_mean: decision.mean_selected(),
            b_mean: Some(decision.scaling().iter().sum::<f64>() / dim as f64),
            a: coeff_a(&input),
            b: coeff_b(&input),
        };
        (next, outcome)
    };
    if !next.is_finite() {
        return Err(Error::Aggregation(format!(
            "non-finite global model at iteration {t}"
        )));
    }
    state.previous = Some(std::mem::replace(&mut state.global, next));
    state.t += 1;
    Ok(outcome)
}

/// A run stops once any entry of the global estimate exceeds this magnitude.
pub const DIVERGENCE_LIMIT: f64 = 1e100;

/// Headline numbers of one run, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub policy: PolicyKind,
    pub task: TaskKind,
    pub dataset: DatasetSource,
    /// Iterations completed; fewer than configured after divergence.
    pub iterations: usize,
    /// Iteration at which the estimate crossed [`DIVERGENCE_LIMIT`].
    pub diverged_at: Option<usize>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    /// Expected squared error on fresh samples (regression only).
    pub final_test_mse: Option<f64>,
    /// `F(w*)` when the minimizer is known in closed form.
    pub optimal_loss: Option<f64>,
    /// `F(w_0) − F(w*)`, or `F(w_0)` when `F(w*)` is unknown.
    pub initial_gap: f64,
    pub transmit: TransmitStats,
    pub wall_clock_secs: f64,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: MetricTrace,
    pub bounds: BoundTrace,
    pub final_model: ModelParams,
    pub summary: RunSummary,
    /// `w_0, …, w_T` when requested.
    pub trajectory: Option<Vec<ModelParams>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub record_trajectory: bool,
}

/// Runs `T` iterations of the scenario under its configured policy.
pub fn run_scenario(scn: &Scenario, options: RunOptions) -> Result<RunOutcome> {
    let start = Instant::now();
    let cfg = &scn.config;
    let streams = RngStreams::new(cfg.seed);
    let total = cfg.training.num_iterations;
    let eval_every = cfg.training.eval_every.max(1);
    let initial_loss = scn.global_loss(&scn.initial_model)?;
    let optimal_loss = scn.optimum.as_ref().map(|o| o.loss);
    let initial_gap = initial_loss - optimal_loss.unwrap_or(0.0);
    let (mu, g) = (cfg.analysis.strong_convexity, cfg.nonconvex_g());

    let mut state = TrainingState::new(scn.initial_model.clone());
    let mut trace = MetricTrace::default();
    let mut bounds = BoundTrace::new();
    let mut trajectory = options
        .record_trajectory
        .then(|| vec![scn.initial_model.clone()]);
    let mut diverged_at = None;

    for t in 1..=total {
        let outcome = run_iteration(scn, &streams, &mut state)?;
        let diverging = state.global.0.iter().any(|w| w.abs() > DIVERGENCE_LIMIT);
        let evaluate = cfg.task == TaskKind::LinearRegression
            || t % eval_every == 0
            || t == total
            || diverging;
        let loss = if evaluate {
            Some(scn.global_loss(&state.global)?)
        } else {
            None
        };
        let accuracy = match (&scn.test, evaluate) {
            (Some(test), true) => scn.model.accuracy(&state.global, test)?,
            _ => None,
        };
        let empirical_gap = match (loss, optimal_loss) {
            (Some(l), Some(opt)) => Some(l - opt),
            _ => None,
        };
        bounds.push(outcome.a, outcome.b, initial_gap, empirical_gap, mu, g);
        trace.records.push(IterationRecord {
            t,
            loss,
            accuracy,
            selected_mean: outcome.selected_mean,
            b_mean: outcome.b_mean,
            a: outcome.a,
            b: outcome.b.value(),
            wall_clock_secs: start.elapsed().as_secs_f64(),
        });
        if let Some(traj) = trajectory.as_mut() {
            traj.push(state.global.clone());
        }
        if diverging {
            diverged_at = Some(t);
            break;
        }
    }

    let final_loss = trace.final_loss().unwrap_or(initial_loss);
    let final_test_mse = scn
        .regression_spec
        .as_ref()
        .map(|spec| data::population_mse(&state.global, spec))
        .transpose()?;
    let summary = RunSummary {
        seed: cfg.seed,
        policy: cfg.policy,
        task: cfg.task,
        dataset: scn.source,
        iterations: state.t,
        diverged_at,
        initial_loss,
        final_loss,
        final_accuracy: trace.final_accuracy(),
        final_test_mse,
        optimal_loss,
        initial_gap,
        transmit: state.stats,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok(RunOutcome {
        trace,
        bounds,
        final_model: state.global,
        summary,
        trajectory,
    })
}

/// Prepares the scenario from `cfg` and runs it.
pub fn run_experiment(cfg: ScenarioConfig, mnist: Option<&MnistSource>) -> Result<RunOutcome> {
    run_scenario(&Scenario::prepare(cfg, mnist)?, RunOptions::default())
}

/// Rebuilds the bound trace of a stored run from its per-iteration
/// coefficients and summary.
pub fn bounds_from_records(records: &[IterationRecord], summary: &RunSummary) -> BoundTrace {
    let cfg = &summary.config;
    let (mu, g) = (cfg.analysis.strong_convexity, cfg.nonconvex_g());
    let mut trace = BoundTrace::new();
    for r in records {
        let b = match r.b {
            Some(v) => CoeffB::Finite(v),
            None => CoeffB::Unbounded { entry: 0 },
        };
        let empirical = match (r.loss, summary.optimal_loss) {
            (Some(l), Some(opt)) => Some(l - opt),
            _ => None,
        };
        trace.push(r.a, b, summary.initial_gap, empirical, mu, g);
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_regression(policy: PolicyKind) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::regression();
        cfg.policy = policy;
        cfg.network.num_workers = 6;
        cfg.training.num_iterations = 300;
        cfg
    }

    #[test]
    fn perfect_policy_matches_plain_gradient_descent() {
        let cfg = small_regression(PolicyKind::Perfect);
        let scn = Scenario::prepare(cfg.clone(), None).unwrap();
        let out = run_scenario(&scn, RunOptions::default()).unwrap();
        let mut w = scn.initial_model.clone();
        for _ in 0..cfg.training.num_iterations {
            let g = scn.model.local_gradient(&w, &scn.pooled).unwrap();
            w = crate::learning::step(&w, &g, cfg.training.learning_rate);
        }
        for (a, b) in out.final_model.0.iter().zip(&w.0) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(out.summary.transmit, TransmitStats::default());
    }

    #[test]
    fn runs_are_deterministic() {
        for policy in PolicyKind::ALL {
            let a = run_experiment(small_regression(policy), None).unwrap();
            let b = run_experiment(small_regression(policy), None).unwrap();
            assert_eq!(a.trace.records.len(), 300);
            assert_eq!(a.final_model, b.final_model);
            assert_eq!(a.summary.final_loss, b.summary.final_loss);
        }
    }

    #[test]
    fn inflota_noiseless_without_caps_equals_perfect() {
        let mut cfg = small_regression(PolicyKind::Inflota);
        cfg.network.noise_variance_mw = 0.0;
        cfg.network.max_power_mw = crate::config::PowerSpec::Uniform(1e12);
        cfg.scheduler.eta = crate::config::EtaMode::Fixed { value: 1.0 };
        cfg.training.num_iterations = 50;
        let scn = Scenario::prepare(cfg, None).unwrap();
        let ota = run_scenario(&scn, RunOptions::default()).unwrap();
        let ideal = run_scenario(
            &scn.clone().with_policy(PolicyKind::Perfect),
            RunOptions::default(),
        )
        .unwrap();
        assert_eq!(ota.summary.transmit.clamped, 0);
        for (a, b) in ota.final_model.0.iter().zip(&ideal.final_model.0) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn random_policy_selects_about_half() {
        let mut cfg = small_regression(PolicyKind::Random);
        cfg.training.num_iterations = 2000;
        let out = run_experiment(cfg, None).unwrap();
        let mean = out
            .trace
            .records
            .iter()
            .map(|r| r.selected_mean)
            .sum::<f64>()
            / 2000.0;
        // E|S| for a nonempty Bernoulli(1/2) subset of 6 workers: 3 / (1 − 2⁻⁶)
        let expected = 3.0 / (1.0 - 0.5f64.powi(6));
        assert!((mean - expected).abs() < 0.05, "{mean} vs {expected}");
    }

    #[test]
    fn stored_records_reproduce_bound_trace() {
        let out = run_experiment(small_regression(PolicyKind::Inflota), None).unwrap();
        let rebuilt = bounds_from_records(&out.trace.records, &out.summary);
        assert_eq!(rebuilt, out.bounds);
    }

    #[test]
    fn transmissions_respect_power_cap_and_are_counted() {
        let out = run_experiment(small_regression(PolicyKind::Inflota), None).unwrap();
        let s = out.summary.transmit;
        assert!(s.transmissions > 0);
        assert!(s.clamped <= s.transmissions);
    }
}
