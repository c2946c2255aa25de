//! Noisy line `y = slope·x + intercept + noise_scale·n` with `x ~ U[0,1]`, `n ~ N(0,1)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::DataConfig;
use crate::error::{Error, Result};
use crate::learning::Dataset;
use crate::model::ModelParams;
use crate::rng::{RngStreams, StreamLabel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticRegressionSpec {
    pub slope: f64,
    pub intercept: f64,
    pub noise_scale: f64,
    /// Inclusive per-worker sample count range.
    pub samples_range: [usize; 2],
}

impl Default for SyntheticRegressionSpec {
    fn default() -> Self {
        Self::from(&DataConfig::default())
    }
}

impl From<&DataConfig> for SyntheticRegressionSpec {
    fn from(cfg: &DataConfig) -> Self {
        Self {
            slope: cfg.slope,
            intercept: cfg.intercept,
            noise_scale: cfg.noise_scale,
            samples_range: cfg.samples_per_worker,
        }
    }
}

impl SyntheticRegressionSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.noise_scale >= 0.0) {
            errors.push("noise_scale ≥ 0 violated".to_string());
        }
        let [lo, hi] = self.samples_range;
        if lo == 0 || lo > hi {
            errors.push(format!(
                "sample range [{lo}, {hi}] must be nonempty and positive"
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// `count` samples drawn from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Dataset {
        let mut xs = Vec::with_capacity(count);
        let mut ys = Vec::with_capacity(count);
        for _ in 0..count {
            let x: f64 = rng.random();
            let n: f64 = rng.sample(StandardNormal);
            xs.push(x);
            ys.push(self.slope * x + self.intercept + self.noise_scale * n);
        }
        Dataset::new(xs, ys, 1, 1).expect("consistent shapes")
    }
}

/// One dataset per worker. Worker `i` draws its count and samples from
/// stream `("data", i)`, so the first `U` workers see the same data for any
/// larger `U`.
pub fn gen_synthetic(
    spec: &SyntheticRegressionSpec,
    num_workers: usize,
    streams: &RngStreams,
) -> Result<Vec<Dataset>> {
    spec.validate()?;
    let [lo, hi] = spec.samples_range;
    Ok((0..num_workers)
        .map(|i| {
            let mut rng = streams.stream(StreamLabel::Data, i as u64);
            let count = rng.random_range(lo..=hi);
            spec.sample(count, &mut rng)
        })
        .collect())
}

fn moments(data: &Dataset) -> Result<(f64, f64, f64, f64, f64)> {
    if data.input_dim() != 1 || data.target_dim() != 1 {
        return Err(Error::Shape {
            expected: 1,
            got: data.input_dim().max(data.target_dim()),
        });
    }
    if data.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    let n = data.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in data.rows() {
        sx += x[0];
        sy += y[0];
        sxx += x[0] * x[0];
        sxy += x[0] * y[0];
    }
    Ok((n, sx / n, sy / n, sxx / n, sxy / n))
}

/// Closed-form least-squares `[slope, intercept]`.
pub fn least_squares(data: &Dataset) -> Result<ModelParams> {
    let (_, mx, my, mxx, mxy) = moments(data)?;
    let var = mxx - mx * mx;
    if !(var > 0.0) {
        return Err(Error::Data("inputs have zero variance".into()));
    }
    let slope = (mxy - mx * my) / var;
    Ok(ModelParams(vec![slope, my - slope * mx]))
}

/// Extreme eigenvalues `(L, μ)` of the squared-error Hessian `2 E[[x², x], [x, 1]]`.
pub fn regression_curvature(data: &Dataset) -> Result<(f64, f64)> {
    let (_, mx, _, mxx, _) = moments(data)?;
    let (a, b, c) = (2.0 * mxx, 2.0 * mx, 2.0);
    let mean = (a + c) / 2.0;
    let radius = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    Ok((mean + radius, mean - radius))
}

/// Expected squared error of `[slope, intercept]` on fresh data from `spec`.
pub fn population_mse(model: &ModelParams, spec: &SyntheticRegressionSpec) -> Result<f64> {
    model.expect_len(2)?;
    let da = model.0[0] - spec.slope;
    let dc = model.0[1] - spec.intercept;
    Ok(da * da / 3.0 + da * dc + dc * dc + spec.noise_scale * spec.noise_scale)
}
