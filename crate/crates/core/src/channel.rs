//! Uplink physical layer at the baseband-symbol level.
//!
//! Each model entry is carried by one real amplitude per worker. Workers
//! pre-invert their channel gain and scale by `K_i·b`, so the superposition at
//! the parameter server is `Σ_i K_i b β_i w_i + z`; dividing by `Σ_i K_i β_i b`
//! recovers the weighted average plus scaled noise.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::config::FadingMode;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Fading amplitudes `h_{i,t}^d` for one iteration, worker-major (`U × D`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    gains: Vec<f64>,
    num_workers: usize,
    dim: usize,
    /// `σ²` in milliwatts.
    pub noise_variance: f64,
}

impl ChannelRealization {
    pub fn new(
        gains: Vec<f64>,
        num_workers: usize,
        dim: usize,
        noise_variance: f64,
    ) -> Result<Self> {
        if gains.len() != num_workers * dim {
            return Err(Error::Shape {
                expected: num_workers * dim,
                got: gains.len(),
            });
        }
        if let Some(h) = gains.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::Channel(format!(
                "channel gain {h} is not positive and finite"
            )));
        }
        Ok(Self {
            gains,
            num_workers,
            dim,
            noise_variance,
        })
    }

    pub fn num_workers(&self) -> usize {
        self.num_workers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gain(&self, worker: usize, entry: usize) -> f64 {
        self.gains[worker * self.dim + entry]
    }

    /// All gains of one worker, indexed by entry.
    pub fn worker_gains(&self, worker: usize) -> &[f64] {
        &self.gains[worker * self.dim..(worker + 1) * self.dim]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }
}

/// Rayleigh amplitude: square root of a unit-mean exponential power draw.
pub fn rayleigh_amplitude<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let power: f64 = Exp1.sample(rng);
        if power > 0.0 {
            return power.sqrt();
        }
    }
}

/// Draws one iteration's gains from the "channel" stream.
pub fn draw_channel<R: Rng + ?Sized>(
    num_workers: usize,
    dim: usize,
    fading: FadingMode,
    noise_variance: f64,
    rng: &mut R,
) -> ChannelRealization {
    let mut gains = Vec::with_capacity(num_workers * dim);
    for _ in 0..num_workers {
        match fading {
            FadingMode::PerEntry => gains.extend((0..dim).map(|_| rayleigh_amplitude(rng))),
            FadingMode::PerIteration => {
                let h = rayleigh_amplitude(rng);
                gains.extend(std::iter::repeat_n(h, dim));
            }
        }
    }
    ChannelRealization {
        gains,
        num_workers,
        dim,
        noise_variance,
    }
}

/// Per-entry scaling factors `b_t^d` and selections `β_{i,t}^d`.
///
/// Selections are stored entry-major: `selected[d * U + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingDecision {
    scaling: Vec<f64>,
    selected: Vec<bool>,
    num_workers: usize,
}

impl SchedulingDecision {
    pub fn new(scaling: Vec<f64>, selected: Vec<bool>, num_workers: usize) -> Result<Self> {
        let dim = scaling.len();
        if selected.len() != dim * num_workers {
            return Err(Error::Shape {
                expected: dim * num_workers,
                got: selected.len(),
            });
        }
        if let Some(d) = scaling.iter().position(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::Scheduler(format!(
                "scaling factor of entry {d} is {}",
                scaling[d]
            )));
        }
        if num_workers > 0 {
            if let Some(d) = selected
                .chunks_exact(num_workers)
                .position(|sel| !sel.iter().any(|&s| s))
            {
                return Err(Error::Aggregation(format!(
                    "entry {d} has no selected worker"
                )));
            }
        }
        Ok(Self {
            scaling,
            selected,
            num_workers,
        })
    }

    /// Every worker selected on every entry with the given scaling factors.
    pub fn full(scaling: Vec<f64>, num_workers: usize) -> Result<Self> {
        let n = scaling.len() * num_workers;
        Self::new(scaling, vec![true; n], num_workers)
    }

    pub fn dim(&self) -> usize {
        self.scaling.len()
    }

    pub fn num_workers(&self) -> usize {
        self.num_workers
    }

    pub fn scaling(&self) -> &[f64] {
        &self.scaling
    }

    /// Entry-major selection flags.
    pub fn selections(&self) -> &[bool] {
        &self.selected
    }

    pub fn is_selected(&self, worker: usize, entry: usize) -> bool {
        self.selected[entry * self.num_workers + worker]
    }

    pub fn entry_selection(&self, entry: usize) -> &[bool] {
        &self.selected[entry * self.num_workers..(entry + 1) * self.num_workers]
    }

    /// `‖1 − β_i‖²`: number of entries worker `i` does not transmit.
    pub fn deselected_count(&self, worker: usize) -> usize {
        (0..self.dim())
            .filter(|&d| !self.is_selected(worker, d))
            .count()
    }

    /// Mean number of selected workers per entry.
    pub fn mean_selected(&self) -> f64 {
        self.selected.iter().filter(|&&s| s).count() as f64 / self.dim() as f64
    }

    /// `Σ_i K_i β_i^d b^d` for entry `d`.
    pub fn denominator(&self, entry: usize, weights: &[usize]) -> f64 {
        let k: usize = self
            .entry_selection(entry)
            .iter()
            .zip(weights)
            .filter(|(s, _)| **s)
            .map(|(_, k)| k)
            .sum();
        k as f64 * self.scaling[entry]
    }
}

/// Largest amplitude whose square does not exceed `max_power`.
pub fn amplitude_cap(max_power: f64) -> f64 {
    let s = max_power.sqrt();
    if s * s > max_power {
        s.next_down()
    } else {
        s
    }
}

/// Bounded transmit amplitude `sgn(w)·min(K_i b |w| / h, √P^Max)`, or 0 when
/// the worker is not selected for this entry.
pub fn transmit_amplitude(
    w_entry: f64,
    sample_count: usize,
    scaling: f64,
    gain: f64,
    selected: bool,
    max_power: f64,
) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::Channel(format!("non-positive channel gain {gain}")));
    }
    if !selected {
        return Ok(0.0);
    }
    let magnitude =
        (sample_count as f64 * scaling * w_entry.abs() / gain).min(amplitude_cap(max_power));
    Ok(magnitude.copysign(w_entry))
}

/// Received superposition `y^d = Σ_i h_i^d a_i^d + z^d`, `z^d ~ N(0, σ²)`.
///
/// `amplitudes` is worker-major like the channel. One noise sample is drawn per
/// entry, in entry order, even when σ² = 0.
pub fn superpose<R: Rng + ?Sized>(
    amplitudes: &[f64],
    channel: &ChannelRealization,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if amplitudes.len() != channel.gains.len() {
        return Err(Error::Shape {
            expected: channel.gains.len(),
            got: amplitudes.len(),
        });
    }
    let dim = channel.dim;
    let mut y = vec![0.0; dim];
    for (a_row, h_row) in amplitudes
        .chunks_exact(dim)
        .zip(channel.gains.chunks_exact(dim))
    {
        for ((acc, a), h) in y.iter_mut().zip(a_row).zip(h_row) {
            *acc += h * a;
        }
    }
    let sigma = channel.noise_variance.sqrt();
    for acc in &mut y {
        let n: f64 = StandardNormal.sample(rng);
        *acc += sigma * n;
    }
    Ok(y)
}

/// Parameter-server estimate `w^d = y^d / Σ_i K_i β_i^d b^d`.
pub fn ps_estimate(
    received: &[f64],
    decision: &SchedulingDecision,
    weights: &[usize],
) -> Result<ModelParams> {
    if received.len() != decision.dim() {
        return Err(Error::Shape {
            expected: decision.dim(),
            got: received.len(),
        });
    }
    if weights.len() != decision.num_workers() {
        return Err(Error::Shape {
            expected: decision.num_workers(),
            got: weights.len(),
        });
    }
    received
        .iter()
        .enumerate()
        .map(|(d, y)| {
            let denom = decision.denominator(d, weights);
            if denom > 0.0 {
                Ok(y / denom)
            } else {
                Err(Error::Aggregation(format!(
                    "entry {d} has a zero post-processing denominator"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(ModelParams)
}
