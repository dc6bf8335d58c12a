//! L2-regularized logistic loss and its full-batch gradient descent solver.
//!
//! Parameters are laid out as `[w_0, .., w_{d-1}, bias]`. The bias is not
//! penalized.

use serde::{Deserialize, Serialize};

use super::features::SparseRow;
use super::ClassifierError;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean logistic loss over a sparse design matrix plus `l2 / 2 * ||w||^2`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticObjective<'a> {
    rows: &'a [SparseRow],
    labels: &'a [f64],
    dim: usize,
    l2: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(rows: &'a [SparseRow], labels: &'a [f64], dim: usize, l2: f64) -> Self {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        assert!(!rows.is_empty(), "objective needs at least one row");
        Self { rows, labels, dim, l2 }
    }

    /// Number of parameters, including the bias.
    pub fn n_params(&self) -> usize {
        self.dim + 1
    }

    fn margin(&self, row: &SparseRow, params: &[f64]) -> f64 {
        row.iter().map(|&(i, v)| params[i] * v).sum::<f64>() + params[self.dim]
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        0.5 * self.l2 * params[..self.dim].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let n = self.rows.len() as f64;
        let data: f64 = self
            .rows
            .iter()
            .zip(self.labels)
            .map(|(row, &y)| {
                let z = self.margin(row, params);
                softplus(z) - y * z
            })
            .sum();
        data / n + self.penalty(params)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.loss_and_gradient(params).1
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let n = self.rows.len() as f64;
        let mut grad = vec![0.0; self.n_params()];
        let mut data = 0.0;
        for (row, &y) in self.rows.iter().zip(self.labels) {
            let z = self.margin(row, params);
            data += softplus(z) - y * z;
            let r = (sigmoid(z) - y) / n;
            for &(i, v) in row {
                grad[i] += r * v;
            }
            grad[self.dim] += r;
        }
        for (g, w) in grad[..self.dim].iter_mut().zip(params) {
            *g += self.l2 * w;
        }
        (data / n + self.penalty(params), grad)
    }
}

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientDescent {
    pub l2: f64,
    pub initial_step: f64,
    /// Stop once an accepted step lowers the loss by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GradientDescent {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            initial_step: 2.0,
            tolerance: 1e-8,
            max_iterations: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub params: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
}

const MIN_STEP: f64 = 1e-15;

impl GradientDescent {
    /// Minimizes `objective` from the origin.
    ///
    /// The first step is `initial_step`; later steps start from the
    /// Barzilai-Borwein estimate `s·s / s·y`. A step that raises the loss is
    /// rejected and halved, so the loss never increases.
    pub fn minimize(&self, objective: &LogisticObjective<'_>) -> Result<Solution, ClassifierError> {
        let mut params = vec![0.0; objective.n_params()];
        let (mut loss, mut grad) = objective.loss_and_gradient(&params);
        let mut step = self.initial_step;
        let mut last_delta = f64::INFINITY;
        let mut candidate = vec![0.0; params.len()];
        for iteration in 1..=self.max_iterations {
            for ((c, p), g) in candidate.iter_mut().zip(&params).zip(&grad) {
                *c = p - step * g;
            }
            let (new_loss, new_grad) = objective.loss_and_gradient(&candidate);
            if new_loss > loss || !new_loss.is_finite() {
                step /= 2.0;
                if step < MIN_STEP {
                    // No representable descent step left: numerically stationary.
                    return Ok(Solution {
                        params,
                        loss,
                        iterations: iteration,
                    });
                }
                continue;
            }
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..params.len() {
                let s = candidate[i] - params[i];
                ss += s * s;
                sy += s * (new_grad[i] - grad[i]);
            }
            if sy > 0.0 && (ss / sy).is_finite() {
                step = ss / sy;
            }
            last_delta = loss - new_loss;
            std::mem::swap(&mut params, &mut candidate);
            loss = new_loss;
            grad = new_grad;
            if last_delta < self.tolerance {
                return Ok(Solution {
                    params,
                    loss,
                    iterations: iteration,
                });
            }
        }
        Err(ClassifierError::ConvergenceFailure {
            iterations: self.max_iterations,
            loss,
            last_delta,
            gradient_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            step,
        })
    }
}
