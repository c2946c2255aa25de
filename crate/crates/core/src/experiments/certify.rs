//! Measured analysis constants for the regression task.
//!
//! `L` and `μ` are the extreme eigenvalues of the pooled squared-error
//! Hessian. With `ρ₂ = 1/D`, `ρ₁` is the largest excess of a per-sample
//! squared gradient norm over `ρ₂ ‖∇F‖²` seen along the run's own global
//! trajectory, inflated by a safety factor. The transmit margin `η` is fixed
//! to the largest entry of any local step `α ∇F_i` on the same trajectory,
//! inflated alike, so no transmission is ever clamped. Because both constants
//! feed the scheduler, the run is repeated until they cover the trajectory
//! they produce.

use crate::config::{EtaMode, ScenarioConfig, TaskKind};
use crate::data;
use crate::error::{Error, Result};
use crate::learning::{Dataset, TaskModel};
use crate::model::{ModelParams, WorkerProfile};

use super::run::{run_scenario, RunOptions, RunOutcome};
use super::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub lipschitz: f64,
    pub strong_convexity: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub eta: f64,
    /// Largest excess measured on the final run's trajectory.
    pub measured_rho1: f64,
    /// Largest local step entry measured on the final run's trajectory.
    pub measured_eta: f64,
    pub rounds: usize,
}

/// `max_{w, k} ‖∇f(w; x_k, y_k)‖² − ρ₂ ‖∇F(w)‖²` over `models` and every sample.
pub fn measure_rho1(pooled: &Dataset, models: &[ModelParams], rho2: f64) -> Result<f64> {
    let n = pooled.len() as f64;
    let mut worst = 0.0f64;
    for w in models {
        w.expect_len(2)?;
        let (a, c) = (w.0[0], w.0[1]);
        let (mut gx, mut gc) = (0.0, 0.0);
        for (x, y) in pooled.rows() {
            let r = a * x[0] + c - y[0];
            gx += 2.0 * r * x[0];
            gc += 2.0 * r;
        }
        let full = (gx / n).powi(2) + (gc / n).powi(2);
        for (x, y) in pooled.rows() {
            let r = a * x[0] + c - y[0];
            let sample = 4.0 * r * r * (x[0] * x[0] + 1.0);
            worst = worst.max(sample - rho2 * full);
        }
    }
    Ok(worst)
}

/// `max_{w, i, d} |α ∂_d F_i(w)|` over `models` and every worker.
pub fn measure_eta(
    model: &TaskModel,
    workers: &[WorkerProfile],
    models: &[ModelParams],
    learning_rate: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for w in models {
        for worker in workers {
            let g = model.local_gradient(w, &worker.dataset)?;
            worst =
                g.0.iter()
                    .fold(worst, |m, v| m.max(learning_rate * v.abs()));
        }
    }
    Ok(worst)
}

/// Sets `L`, `μ`, `ρ₁`, `ρ₂`, `η` from data, runs with step `1/L`, and
/// repeats until `ρ₁` and `η` cover the realized trajectory.
pub fn certify_regression(
    cfg: ScenarioConfig,
    inflation: f64,
    max_rounds: usize,
) -> Result<(Certificate, RunOutcome)> {
    if cfg.task != TaskKind::LinearRegression {
        return Err(Error::config(
            "certification applies to the regression task",
        ));
    }
    let mut scn = Scenario::prepare(cfg, None)?;
    let (l, mu) = data::regression_curvature(&scn.pooled)?;
    let rho2 = 1.0 / scn.dim() as f64;
    let optimum = scn
        .optimum
        .clone()
        .expect("regression has a closed-form optimum")
        .model;
    let anchors = [scn.initial_model.clone(), optimum];
    let mut rho1 = inflation * measure_rho1(&scn.pooled, &anchors, rho2)?;
    let mut eta = inflation * measure_eta(&scn.model, &scn.workers, &anchors, 1.0 / l)?;
    for round in 1..=max_rounds {
        let a = &mut scn.config.analysis;
        a.lipschitz = l;
        a.strong_convexity = mu;
        a.rho1 = rho1;
        a.rho2 = Some(rho2);
        a.certify = true;
        scn.config.training.learning_rate = 1.0 / l;
        scn.config.scheduler.eta = EtaMode::Fixed { value: eta };
        scn.config = scn.config.clone().validate()?;
        let outcome = run_scenario(
            &scn,
            RunOptions {
                record_trajectory: true,
            },
        )?;
        let models = outcome.trajectory.as_deref().unwrap_or_default();
        let measured_rho1 = measure_rho1(&scn.pooled, models, rho2)?;
        let measured_eta = measure_eta(&scn.model, &scn.workers, models, 1.0 / l)?;
        if measured_rho1 <= rho1 && measured_eta <= eta {
            let cert = Certificate {
                lipschitz: l,
                strong_convexity: mu,
                rho1,
                rho2,
                eta,
                measured_rho1,
                measured_eta,
                rounds: round,
            };
            return Ok((cert, outcome));
        }
        rho1 = rho1.max(inflation * measured_rho1);
        eta = eta.max(inflation * measured_eta);
    }
    Err(Error::config(format!(
        "ρ₁ and η did not settle within {max_rounds} rounds"
    )))
}
