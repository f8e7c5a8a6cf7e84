//! Linear SVM trained by dual coordinate descent on the L2-regularized
//! hinge loss.
//!
//! The bias is learned as the weight of a constant-1 feature and is
//! therefore regularized together with the other weights:
//!
//! ```text
//! min  1/2 (|w|^2 + b^2) + c * sum_i max(0, 1 - y_i (w . x_i + b))
//! ```
//!
//! The dual is solved one coordinate at a time over `0 <= alpha_i <= c`,
//! visiting coordinates in a seeded random order each epoch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};
use crate::{check_labels, Label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvmParams {
    pub c: f64,
    /// Maximum number of epochs.
    pub max_iter: usize,
    /// Stop when the largest projected-gradient magnitude in an epoch is
    /// below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 1000,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub params: SvmParams,
    /// Primal objective at the returned solution.
    pub final_objective: f64,
    /// Dual objective `1/2 |w|^2 - sum(alpha)` after each epoch. The
    /// solver never increases it.
    pub dual_trace: Vec<f64>,
    pub converged: bool,
}

/// Maps {0, 1} to {-1, +1}.
fn sign(label: Label) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Primal objective of `(weights, bias)` on the given data.
pub fn primal_objective(x: &DenseMatrix, y: &[Label], weights: &[f64], bias: f64, c: f64) -> f64 {
    let reg = 0.5 * (dot(weights, weights) + bias * bias);
    let loss: f64 = (0..x.rows())
        .map(|i| (1.0 - sign(y[i]) * (dot(weights, x.row(i)) + bias)).max(0.0))
        .sum();
    reg + c * loss
}

pub fn fit(x: &DenseMatrix, y: &[Label], params: &SvmParams) -> Result<SvmModel> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {}", params.c)));
    }
    if params.max_iter == 0 || params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::InvalidParameter("max_iter and tol must be positive".into()));
    }
    check_labels(y)?;
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let n = x.rows();
    if n < 2 || !y.contains(&0) || !y.contains(&1) {
        return Err(Error::InsufficientData(
            "SVM training needs both classes present (class balance)".into(),
        ));
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite feature value".into()));
    }

    let c = params.c;
    let ys: Vec<f64> = y.iter().map(|&l| sign(l)).collect();
    let diag: Vec<f64> = (0..n).map(|i| dot(x.row(i), x.row(i)) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut dual_trace = Vec::new();
    let mut converged = false;

    for _ in 0..params.max_iter {
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let xi = x.row(i);
            let g = ys[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * ys[i];
                if step != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(xi) {
                        *wj += step * xj;
                    }
                    b += step;
                }
            }
        }
        dual_trace.push(0.5 * (dot(&w, &w) + b * b) - alpha.iter().sum::<f64>());
        if max_violation < params.tol {
            converged = true;
            break;
        }
    }

    let final_objective = primal_objective(x, y, &w, b, c);
    Ok(SvmModel {
        weights: w,
        bias: b,
        params: *params,
        final_objective,
        dual_trace,
        converged,
    })
}

impl SvmModel {
    pub fn decision_function(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    /// Class 1 iff the decision value is strictly positive.
    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<Label>> {
        if x.rows() > 0 && x.cols() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.cols(),
            });
        }
        Ok((0..x.rows())
            .map(|i| Label::from(self.decision_function(x.row(i)) > 0.0))
            .collect())
    }
}
