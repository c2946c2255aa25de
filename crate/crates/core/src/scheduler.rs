//! Per-entry joint worker selection and power scaling.
//!
//! For one model entry the parameter server minimizes the entry's share of
//! the noise-plus-exclusion offset
//!
//! ```text
//! R(b, β) = L σ² / (2 (Σ_i β_i K_i b)²) + Σ_i K_i ρ₁ (1 − β_i) / (2 L K)
//! ```
//!
//! subject to the conservative power constraint `(K_i b / h_i)² (|w_{t−1}| + η)² ≤ P_i`
//! for every selected worker. Each worker admits scaling factors up to
//! `b_i^Max = √P_i h_i / (K_i (|w_{t−1}| + η))`; choosing `b` fixes the best
//! selection (everyone whose `b_i^Max ≥ b`), and only the `U` values
//! `b ∈ {b_k^Max}` can be optimal. [`solve_p4`] scans those `U` candidates.
//! [`brute_force_oracle`] enumerates every nonempty subset instead and exists
//! to check that claim.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::EtaMode;
use crate::error::{Error, Result};
use crate::rng::{RngStreams, StreamLabel};

/// Everything the scheduler needs about one entry at one iteration.
#[derive(Debug, Clone, Copy)]
pub struct SchedulerInput<'a> {
    /// `w_{t−1}^d`, the entry of the last global estimate.
    pub prev_global: f64,
    pub eta: f64,
    pub gains: &'a [f64],
    pub sample_counts: &'a [usize],
    pub max_powers: &'a [f64],
    pub lipschitz: f64,
    pub noise_variance: f64,
    pub rho1: f64,
    /// Used as `b` when `|w_{t−1}| + η = 0`.
    pub b_ceiling: f64,
}

impl SchedulerInput<'_> {
    pub fn num_workers(&self) -> usize {
        self.gains.len()
    }

    /// `K = Σ_i K_i`.
    pub fn total_samples(&self) -> usize {
        self.sample_counts.iter().sum()
    }

    fn amplitude_bound(&self) -> f64 {
        self.prev_global.abs() + self.eta
    }

    pub fn is_degenerate(&self) -> bool {
        self.amplitude_bound() == 0.0
    }
}

/// A candidate `(b, β)` together with its objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePoint {
    pub scaling: f64,
    pub selection: Vec<bool>,
    pub objective: f64,
}

/// `R(b, β)`. Errors when no worker is selected.
pub fn objective_r(scaling: f64, selection: &[bool], input: &SchedulerInput<'_>) -> Result<f64> {
    let selected_k: usize = selection
        .iter()
        .zip(input.sample_counts)
        .filter(|(s, _)| **s)
        .map(|(_, k)| k)
        .sum();
    if selected_k == 0 {
        return Err(Error::Scheduler(
            "objective undefined for an empty selection".into(),
        ));
    }
    let excluded_k: usize = input.total_samples() - selected_k;
    let l = input.lipschitz;
    let denom = selected_k as f64 * scaling;
    let noise = l * input.noise_variance / (2.0 * denom * denom);
    let exclusion = excluded_k as f64 * input.rho1 / (2.0 * l * input.total_samples() as f64);
    Ok(noise + exclusion)
}

/// `b_k^Max = √P_k h_k / (K_k (|w_{t−1}| + η))`.
pub fn max_scaling(worker: usize, input: &SchedulerInput<'_>) -> Result<f64> {
    let bound = input.amplitude_bound();
    if bound == 0.0 {
        return Err(Error::Scheduler(
            "degenerate entry: |w| + η = 0 leaves the scaling factor unbounded".into(),
        ));
    }
    Ok(input.max_powers[worker].sqrt() * input.gains[worker]
        / (input.sample_counts[worker] as f64 * bound))
}

fn all_max_scalings(input: &SchedulerInput<'_>) -> Result<Vec<f64>> {
    (0..input.num_workers())
        .map(|k| max_scaling(k, input))
        .collect()
}

/// Workers whose power cap admits `b` (`b ≤ b_i^Max`, boundary included).
pub fn induced_selection(scaling: f64, input: &SchedulerInput<'_>) -> Result<Vec<bool>> {
    Ok(select_from(scaling, &all_max_scalings(input)?))
}

fn select_from(scaling: f64, maxima: &[f64]) -> Vec<bool> {
    maxima.iter().map(|&m| scaling <= m).collect()
}

fn degenerate_point(input: &SchedulerInput<'_>) -> Result<FeasiblePoint> {
    let selection = vec![true; input.num_workers()];
    let objective = objective_r(input.b_ceiling, &selection, input)?;
    Ok(FeasiblePoint {
        scaling: input.b_ceiling,
        selection,
        objective,
    })
}

/// `true` if `(r, b)` should replace the incumbent `(best_r, best_b)`.
fn improves(r: f64, b: f64, best_r: f64, best_b: f64) -> bool {
    r < best_r || (r == best_r && b > best_b)
}

/// Line search over the `U` candidate scaling factors.
///
/// Ties go to the larger `b`, then to the smaller defining worker index.
pub fn solve_p4(input: &SchedulerInput<'_>) -> Result<FeasiblePoint> {
    if input.num_workers() == 0 {
        return Err(Error::Scheduler("no workers to schedule".into()));
    }
    if input.is_degenerate() {
        return degenerate_point(input);
    }
    let maxima = all_max_scalings(input)?;
    let mut best: Option<FeasiblePoint> = None;
    for &b in &maxima {
        let selection = select_from(b, &maxima);
        let r = objective_r(b, &selection, input)?;
        let replace = match &best {
            None => true,
            Some(p) => improves(r, b, p.objective, p.scaling),
        };
        if replace {
            best = Some(FeasiblePoint {
                scaling: b,
                selection,
                objective: r,
            });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Largest worker count the exhaustive oracle accepts.
pub const ORACLE_MAX_WORKERS: usize = 20;

/// Exhaustive search over every nonempty worker subset, each paired with the
/// largest scaling factor all its members admit.
pub fn brute_force_oracle(input: &SchedulerInput<'_>) -> Result<FeasiblePoint> {
    let u = input.num_workers();
    if u == 0 {
        return Err(Error::Scheduler("no workers to schedule".into()));
    }
    if u > ORACLE_MAX_WORKERS {
        return Err(Error::Scheduler(format!(
            "brute-force oracle refuses U = {u} (limit {ORACLE_MAX_WORKERS})"
        )));
    }
    if input.is_degenerate() {
        return degenerate_point(input);
    }
    let maxima = all_max_scalings(input)?;
    let mut best: Option<FeasiblePoint> = None;
    let mut selection = vec![false; u];
    for mask in 1u32..(1u32 << u) {
        let mut b = f64::INFINITY;
        for (i, s) in selection.iter_mut().enumerate() {
            *s = mask & (1 << i) != 0;
            if *s {
                b = b.min(maxima[i]);
            }
        }
        let r = objective_r(b, &selection, input)?;
        let replace = match &best {
            None => true,
            Some(p) => improves(r, b, p.objective, p.scaling),
        };
        if replace {
            best = Some(FeasiblePoint {
                scaling: b,
                selection: selection.clone(),
                objective: r,
            });
        }
    }
    Ok(best.expect("at least one subset"))
}

/// `η` for one entry given the two most recent global values of that entry.
pub fn compute_eta(prev: Option<f64>, prev2: Option<f64>, mode: EtaMode) -> f64 {
    match (mode, prev, prev2) {
        (EtaMode::Fixed { value }, _, _) => value,
        (EtaMode::AdaptiveDiff { .. }, Some(a), Some(b)) => (a - b).abs(),
        (EtaMode::AdaptiveDiff { fallback }, _, _) => fallback,
    }
}

/// A self-contained scheduling problem for cross-checking the two solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstance {
    pub gains: Vec<f64>,
    pub sample_counts: Vec<usize>,
    pub max_powers: Vec<f64>,
    pub prev_global: f64,
    pub eta: f64,
    pub lipschitz: f64,
    pub noise_variance: f64,
    pub rho1: f64,
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

impl RandomInstance {
    /// `U` uniform in `2..=max_workers`, log-uniform gains and powers,
    /// `K_i` uniform in `1..=100`.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, max_workers: usize) -> Self {
        let u = rng.random_range(2..=max_workers.max(2));
        Self {
            gains: (0..u).map(|_| log_uniform(rng, 1e-3, 1e1)).collect(),
            sample_counts: (0..u).map(|_| rng.random_range(1..=100)).collect(),
            max_powers: (0..u).map(|_| log_uniform(rng, 1e-1, 1e2)).collect(),
            prev_global: log_uniform(rng, 1e-3, 1e1)
                * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            eta: rng.random_range(0.0..0.5),
            lipschitz: log_uniform(rng, 0.1, 10.0),
            noise_variance: log_uniform(rng, 1e-6, 1e1),
            rho1: log_uniform(rng, 1e-3, 1e1),
        }
    }

    pub fn input(&self) -> SchedulerInput<'_> {
        SchedulerInput {
            prev_global: self.prev_global,
            eta: self.eta,
            gains: &self.gains,
            sample_counts: &self.sample_counts,
            max_powers: &self.max_powers,
            lipschitz: self.lipschitz,
            noise_variance: self.noise_variance,
            rho1: self.rho1,
            b_ceiling: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    pub passed: usize,
    pub failed: usize,
}

/// Solves `count` random instances both ways; an instance passes when the
/// objectives agree exactly. Instance `k` draws from stream `("policy", k)`.
pub fn oracle_check(count: usize, seed: u64, max_workers: usize) -> Result<OracleReport> {
    if max_workers > ORACLE_MAX_WORKERS {
        return Err(Error::config(format!(
            "at most {ORACLE_MAX_WORKERS} workers for the oracle"
        )));
    }
    let streams = RngStreams::new(seed);
    let mut report = OracleReport::default();
    for k in 0..count {
        let inst = RandomInstance::draw(
            &mut streams.stream(StreamLabel::Policy, k as u64),
            max_workers,
        );
        let input = inst.input();
        if solve_p4(&input)?.objective == brute_force_oracle(&input)?.objective {
            report.passed += 1;
        } else {
            report.failed += 1;
        }
    }
    Ok(report)
}
