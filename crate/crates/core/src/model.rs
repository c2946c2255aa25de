use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::Dataset;

/// Flat model parameter vector (global `w` or a local copy `w_i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams(pub Vec<f64>);

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn expect_len(&self, dim: usize) -> Result<()> {
        if self.0.len() == dim {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: dim,
                got: self.0.len(),
            })
        }
    }
}

impl From<Vec<f64>> for ModelParams {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Full-batch gradient of a loss with respect to [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum()
    }
}

/// Static per-worker data: local dataset and transmit power budget.
#[derive(Debug, Clone)]
pub struct WorkerProfile {
    pub id: usize,
    /// Linear milliwatts.
    pub max_power: f64,
    pub dataset: Dataset,
}

impl WorkerProfile {
    pub fn sample_count(&self) -> usize {
        self.dataset.len()
    }
}
