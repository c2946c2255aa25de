//! Loss models, full-batch local training and error-free model averaging.

pub mod mlp;

use rand::Rng;

use crate::config::TaskKind;
use crate::error::{Error, Result};
use crate::model::{Gradient, ModelParams};

pub use mlp::MlpShape;

/// Row-major feature and target matrices with equal row counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
    target_dim: usize,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        targets: Vec<f64>,
        input_dim: usize,
        target_dim: usize,
    ) -> Result<Self> {
        if input_dim == 0 || target_dim == 0 {
            return Err(Error::Data(
                "feature and target widths must be positive".into(),
            ));
        }
        if !inputs.len().is_multiple_of(input_dim) || !targets.len().is_multiple_of(target_dim) {
            return Err(Error::Data(
                "matrix length is not a multiple of its row width".into(),
            ));
        }
        let rows = inputs.len() / input_dim;
        if targets.len() / target_dim != rows {
            return Err(Error::Shape {
                expected: rows,
                got: targets.len() / target_dim,
            });
        }
        Ok(Self {
            inputs,
            targets,
            input_dim,
            target_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.inputs
            .chunks_exact(self.input_dim)
            .zip(self.targets.chunks_exact(self.target_dim))
    }

    pub fn row(&self, i: usize) -> (&[f64], &[f64]) {
        (
            &self.inputs[i * self.input_dim..(i + 1) * self.input_dim],
            &self.targets[i * self.target_dim..(i + 1) * self.target_dim],
        )
    }

    /// Concatenation of several datasets with matching widths.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut iter = parts.into_iter().peekable();
        let first = iter
            .peek()
            .ok_or_else(|| Error::Data("cannot concatenate zero datasets".into()))?;
        let (input_dim, target_dim) = (first.input_dim, first.target_dim);
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for d in iter {
            if d.input_dim != input_dim || d.target_dim != target_dim {
                return Err(Error::Shape {
                    expected: input_dim,
                    got: d.input_dim,
                });
            }
            inputs.extend_from_slice(&d.inputs);
            targets.extend_from_slice(&d.targets);
        }
        Dataset::new(inputs, targets, input_dim, target_dim)
    }
}

/// Model family plus the mapping from the flat parameter vector onto it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskModel {
    /// `ŷ = slope·x + intercept`, parameters `[slope, intercept]`, per-sample
    /// loss `(ŷ - y)²`.
    ///
    /// A chain of two single-neuron linear layers collapses to this affine map.
    LinearRegression,
    MlpClassifier(MlpShape),
}

impl TaskModel {
    pub fn for_kind(kind: TaskKind) -> Self {
        match kind {
            TaskKind::LinearRegression => TaskModel::LinearRegression,
            TaskKind::MlpClassifier => TaskModel::MlpClassifier(MlpShape::MNIST),
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            TaskModel::LinearRegression => TaskKind::LinearRegression,
            TaskModel::MlpClassifier(_) => TaskKind::MlpClassifier,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TaskModel::LinearRegression => 2,
            TaskModel::MlpClassifier(shape) => shape.dim(),
        }
    }

    /// Initial global model `w_0`: zeros for regression, Glorot-uniform for the MLP.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelParams {
        match self {
            TaskModel::LinearRegression => ModelParams::zeros(2),
            TaskModel::MlpClassifier(shape) => ModelParams(shape.init(rng)),
        }
    }

    fn check(&self, model: &ModelParams, data: &Dataset) -> Result<()> {
        model.expect_len(self.dim())?;
        let (input, target) = match self {
            TaskModel::LinearRegression => (1, 1),
            TaskModel::MlpClassifier(s) => (s.input, s.output),
        };
        if data.input_dim != input {
            return Err(Error::Shape {
                expected: input,
                got: data.input_dim,
            });
        }
        if data.target_dim != target {
            return Err(Error::Shape {
                expected: target,
                got: data.target_dim,
            });
        }
        if data.is_empty() {
            return Err(Error::Data("empty local dataset".into()));
        }
        Ok(())
    }

    fn evaluate(&self, model: &ModelParams, data: &Dataset, grad: Option<&mut [f64]>) -> f64 {
        match self {
            TaskModel::LinearRegression => regression_loss_and_grad(&model.0, data, grad),
            TaskModel::MlpClassifier(shape) => shape.loss_and_grad(&model.0, data, grad),
        }
    }

    /// `(1/K_i) Σ_k f(w; x_k, y_k)`.
    pub fn local_loss(&self, model: &ModelParams, data: &Dataset) -> Result<f64> {
        self.check(model, data)?;
        Ok(self.evaluate(model, data, None))
    }

    /// Exact full-batch gradient of [`TaskModel::local_loss`].
    pub fn local_gradient(&self, model: &ModelParams, data: &Dataset) -> Result<Gradient> {
        Ok(self.loss_and_gradient(model, data)?.1)
    }

    pub fn loss_and_gradient(
        &self,
        model: &ModelParams,
        data: &Dataset,
    ) -> Result<(f64, Gradient)> {
        self.check(model, data)?;
        let mut grad = vec![0.0; self.dim()];
        let loss = self.evaluate(model, data, Some(&mut grad));
        Ok((loss, Gradient(grad)))
    }

    /// One gradient-descent step from the broadcast global model: `w - α ∇F_i(w)`.
    pub fn local_update(
        &self,
        global: &ModelParams,
        data: &Dataset,
        learning_rate: f64,
    ) -> Result<ModelParams> {
        if !(learning_rate > 0.0) {
            return Err(Error::config("α > 0 violated"));
        }
        let grad = self.local_gradient(global, data)?;
        Ok(step(global, &grad, learning_rate))
    }

    /// Classification accuracy; `None` for regression.
    pub fn accuracy(&self, model: &ModelParams, data: &Dataset) -> Result<Option<f64>> {
        self.check(model, data)?;
        Ok(match self {
            TaskModel::LinearRegression => None,
            TaskModel::MlpClassifier(shape) => Some(shape.accuracy(&model.0, data)),
        })
    }
}

pub(crate) fn step(global: &ModelParams, grad: &Gradient, learning_rate: f64) -> ModelParams {
    ModelParams(
        global
            .0
            .iter()
            .zip(&grad.0)
            .map(|(w, g)| w - learning_rate * g)
            .collect(),
    )
}

fn regression_loss_and_grad(params: &[f64], data: &Dataset, grad: Option<&mut [f64]>) -> f64 {
    let (slope, intercept) = (params[0], params[1]);
    let mut loss = 0.0;
    let (mut g_slope, mut g_intercept) = (0.0, 0.0);
    for (x, y) in data.rows() {
        let r = slope * x[0] + intercept - y[0];
        loss += r * r;
        g_slope += 2.0 * r * x[0];
        g_intercept += 2.0 * r;
    }
    let n = data.len() as f64;
    if let Some(g) = grad {
        g[0] = g_slope / n;
        g[1] = g_intercept / n;
    }
    loss / n
}

/// Error-free global update `Σ K_i w_i / K`.
pub fn ideal_global_aggregate(locals: &[ModelParams], weights: &[usize]) -> Result<ModelParams> {
    let first = locals
        .first()
        .ok_or_else(|| Error::Aggregation("no local models to aggregate".into()))?;
    if weights.len() != locals.len() {
        return Err(Error::Shape {
            expected: locals.len(),
            got: weights.len(),
        });
    }
    let total: usize = weights.iter().sum();
    if total == 0 {
        return Err(Error::Aggregation("total sample count is zero".into()));
    }
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for (w, &k) in locals.iter().zip(weights) {
        w.expect_len(dim)?;
        let k = k as f64;
        for (a, v) in acc.iter_mut().zip(&w.0) {
            *a += k * v;
        }
    }
    let total = total as f64;
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(ModelParams(acc))
}
