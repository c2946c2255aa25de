//! One-hidden-layer ReLU perceptron with a softmax output, trained on
//! cross-entropy. Parameters live in one flat slice laid out as
//! `[W1 (hidden × input), b1 (hidden), W2 (output × hidden), b2 (output)]`,
//! weights row-major by destination neuron.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpShape {
    pub const MNIST: MlpShape = MlpShape {
        input: 784,
        hidden: 64,
        output: 10,
    };

    pub fn dim(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        (b1, w2, b2)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.dim()];
        let (b1, w2, b2) = self.offsets();
        let limit1 = (6.0 / (self.input + self.hidden) as f64).sqrt();
        let u1 = Uniform::new_inclusive(-limit1, limit1).expect("finite bounds");
        for w in &mut params[..b1] {
            *w = u1.sample(rng);
        }
        let limit2 = (6.0 / (self.hidden + self.output) as f64).sqrt();
        let u2 = Uniform::new_inclusive(-limit2, limit2).expect("finite bounds");
        for w in &mut params[w2..b2] {
            *w = u2.sample(rng);
        }
        params
    }

    /// Output logits and hidden activations for one sample.
    fn forward(&self, params: &[f64], x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &params[j * self.input..(j + 1) * self.input];
            let z = dot(row, x) + params[b1 + j];
            *h = if z > 0.0 { z } else { 0.0 };
        }
        for (k, out) in logits.iter_mut().enumerate() {
            let row = &params[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
            *out = dot(row, hidden) + params[b2 + k];
        }
    }

    /// Mean cross-entropy, and optionally its gradient accumulated into `grad`.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        data: &Dataset,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let (b1, w2, b2) = self.offsets();
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.output];
        let mut dz2 = vec![0.0; self.output];
        let mut dz1 = vec![0.0; self.hidden];
        let mut total = 0.0;

        for (x, y) in data.rows() {
            self.forward(params, x, &mut hidden, &mut logits);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            let y_mass: f64 = y.iter().sum();
            for k in 0..self.output {
                let log_p = logits[k] - max - log_sum;
                total -= y[k] * log_p;
                dz2[k] = log_p.exp() * y_mass - y[k];
            }

            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            for k in 0..self.output {
                let d = dz2[k];
                let row = &mut g[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
                for (gw, h) in row.iter_mut().zip(&hidden) {
                    *gw += d * h;
                }
                g[b2 + k] += d;
            }
            for j in 0..self.hidden {
                // ReLU'(0) = 0
                dz1[j] = if hidden[j] > 0.0 {
                    (0..self.output)
                        .map(|k| params[w2 + k * self.hidden + j] * dz2[k])
                        .sum()
                } else {
                    0.0
                };
            }
            for (j, &d) in dz1.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut g[j * self.input..(j + 1) * self.input];
                for (gw, &xp) in row.iter_mut().zip(x) {
                    if xp != 0.0 {
                        *gw += d * xp;
                    }
                }
                g[b1 + j] += d;
            }
        }

        let n = data.len() as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= n);
        }
        total / n
    }

    /// Fraction of samples whose arg-max logit matches the arg-max target.
    pub fn accuracy(&self, params: &[f64], data: &Dataset) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.output];
        let correct = data
            .rows()
            .filter(|(x, y)| {
                self.forward(params, x, &mut hidden, &mut logits);
                argmax(&logits) == argmax(y)
            })
            .count();
        correct as f64 / data.len() as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_layout_has_50890_parameters() {
        assert_eq!(MlpShape::MNIST.dim(), 50890);
    }

    #[test]
    fn zero_model_gives_uniform_prediction() {
        let shape = MlpShape {
            input: 3,
            hidden: 4,
            output: 10,
        };
        let mut y = vec![0.0; 10];
        y[3] = 1.0;
        let data = Dataset::new(vec![0.5, -1.0, 2.0], y, 3, 10).unwrap();
        let params = vec![0.0; shape.dim()];
        let mut grad = vec![0.0; shape.dim()];
        let loss = shape.loss_and_grad(&params, &data, Some(&mut grad));
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        // hidden pre-activations are all zero, so nothing flows into layer one
        let (b1, w2, _) = shape.offsets();
        assert!(grad[..w2].iter().all(|&g| g == 0.0));
        assert!(grad[..b1].iter().all(|&g| g == 0.0));
        // output bias still receives p - y
        let (_, _, b2) = shape.offsets();
        assert!((grad[b2 + 3] - (0.1 - 1.0)).abs() < 1e-12);
        assert!((grad[b2] - 0.1).abs() < 1e-12);
    }
}
