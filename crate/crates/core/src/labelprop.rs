//! Semi-supervised label propagation.
//!
//! Labeled and unlabeled points form one affinity graph `W` (kNN or RBF).
//! The transition matrix `T` normalizes `W` column-wise so `T[i][j]` is the
//! probability of moving from point `j` to point `i`. Each iteration
//! propagates `Y <- T Y`, row-normalizes `Y`, and resets labeled rows to
//! their one-hot labels.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{knn_weights, nearest_rows, rbf_weights, DenseMatrix};
use crate::{check_labels, Label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum Kernel {
    Knn { n_neighbors: usize },
    Rbf { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelPropParams {
    #[serde(flatten)]
    pub kernel: Kernel,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LabelPropParams {
    /// kNN with 3 neighbours, one iteration, tolerance 1e-10.
    fn default() -> Self {
        Self {
            kernel: Kernel::Knn { n_neighbors: 3 },
            max_iter: 1,
            tol: 1e-10,
        }
    }
}

impl LabelPropParams {
    pub fn knn(n_neighbors: usize, max_iter: usize, tol: f64) -> Self {
        Self {
            kernel: Kernel::Knn { n_neighbors },
            max_iter,
            tol,
        }
    }

    pub fn rbf(gamma: f64, max_iter: usize, tol: f64) -> Self {
        Self {
            kernel: Kernel::Rbf { gamma },
            max_iter,
            tol,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        match self.kernel {
            Kernel::Knn { n_neighbors: 0 } => Err(Error::InvalidParameter("n_neighbors must be positive".into())),
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Affinity matrix over `points` for this kernel.
    pub fn affinity(&self, points: &DenseMatrix) -> Result<DenseMatrix> {
        match self.kernel {
            Kernel::Knn { n_neighbors } => knn_weights(points, n_neighbors),
            Kernel::Rbf { gamma } => rbf_weights(points, gamma),
        }
    }
}

/// Column-normalizes `w`: `T[i][j] = w[i][j] / sum_k w[k][j]`. Columns
/// summing to zero become uniform.
pub fn build_transition(w: &DenseMatrix) -> DenseMatrix {
    let n = w.rows();
    let sums = w.column_sums();
    let mut t = w.clone();
    for i in 0..n {
        for (j, &s) in sums.iter().enumerate() {
            let v = if s > 0.0 { w.get(i, j) / s } else { 1.0 / n as f64 };
            t.set(i, j, v);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelPropModel {
    /// Labeled rows first, then unlabeled rows, each in input order.
    pub training_points: DenseMatrix,
    /// `n x 2` class distributions; column `c` is the probability of class `c`.
    pub label_distributions: DenseMatrix,
    pub labeled_mask: Vec<bool>,
    pub params: LabelPropParams,
    pub iterations_run: usize,
    pub converged: bool,
}

fn one_hot(label: Label) -> [f64; 2] {
    if label == 1 {
        [0.0, 1.0]
    } else {
        [1.0, 0.0]
    }
}

/// Uniform over the classes that occur among labeled points.
fn uniform_row(present: [bool; 2]) -> [f64; 2] {
    match present {
        [true, false] => [1.0, 0.0],
        [false, true] => [0.0, 1.0],
        _ => [0.5, 0.5],
    }
}

/// One propagate / row-normalize / clamp step.
fn propagate_step(t: &DenseMatrix, y: &DenseMatrix, clamp: &[Option<[f64; 2]>], uniform: [f64; 2]) -> DenseMatrix {
    let mut next = t.matmul(y).expect("square transition");
    for (i, fixed) in clamp.iter().enumerate() {
        let row = next.row_mut(i);
        match fixed {
            Some(hot) => row.copy_from_slice(hot),
            None => {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|v| *v /= s);
                } else {
                    row.copy_from_slice(&uniform);
                }
            }
        }
    }
    next
}

/// Fits on labeled points plus unlabeled points. Only feature rows of the
/// unlabeled points are taken, never their labels.
pub fn fit(
    x_labeled: &DenseMatrix,
    y_labeled: &[Label],
    x_unlabeled: &DenseMatrix,
    params: &LabelPropParams,
) -> Result<LabelPropModel> {
    params.check()?;
    check_labels(y_labeled)?;
    if x_labeled.rows() == 0 {
        return Err(Error::InsufficientData("label propagation needs at least one labeled point".into()));
    }
    if y_labeled.len() != x_labeled.rows() {
        return Err(Error::DimensionMismatch {
            expected: x_labeled.rows(),
            found: y_labeled.len(),
        });
    }
    if x_unlabeled.rows() > 0 && x_unlabeled.cols() != x_labeled.cols() {
        return Err(Error::DimensionMismatch {
            expected: x_labeled.cols(),
            found: x_unlabeled.cols(),
        });
    }
    let points = x_labeled.vstack(x_unlabeled)?;
    let n = points.rows();
    if n < 2 {
        return Err(Error::InsufficientData("label propagation needs at least 2 points".into()));
    }
    let n_labeled = x_labeled.rows();

    let present = [y_labeled.contains(&0), y_labeled.contains(&1)];
    let uniform = uniform_row(present);
    let clamp: Vec<Option<[f64; 2]>> = (0..n)
        .map(|i| (i < n_labeled).then(|| one_hot(y_labeled[i])))
        .collect();

    let mut y = DenseMatrix::zeros(n, 2);
    for (i, fixed) in clamp.iter().enumerate() {
        y.row_mut(i).copy_from_slice(&fixed.unwrap_or(uniform));
    }

    let t = build_transition(&params.affinity(&points)?);
    let mut iterations_run = 0;
    let mut converged = false;
    for it in 1..=params.max_iter {
        let next = propagate_step(&t, &y, &clamp, uniform);
        let delta = next.max_abs_diff(&y);
        y = next;
        iterations_run = it;
        if delta < params.tol {
            converged = true;
            break;
        }
    }

    Ok(LabelPropModel {
        training_points: points,
        label_distributions: y,
        labeled_mask: (0..n).map(|i| i < n_labeled).collect(),
        params: *params,
        iterations_run,
        converged,
    })
}

impl LabelPropModel {
    fn present_classes(&self) -> [bool; 2] {
        let mut present = [false, false];
        for (i, &labeled) in self.labeled_mask.iter().enumerate() {
            if labeled {
                let c = usize::from(self.label_distributions.get(i, 1) == 1.0);
                present[c] = true;
            }
        }
        present
    }

    /// Applies one more propagate/normalize/clamp step to the fitted
    /// distributions and returns the result. A converged model moves by
    /// less than `tol`.
    pub fn step(&self) -> Result<DenseMatrix> {
        let t = build_transition(&self.params.affinity(&self.training_points)?);
        let clamp: Vec<Option<[f64; 2]>> = self
            .labeled_mask
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                l.then(|| {
                    let r = self.label_distributions.row(i);
                    [r[0], r[1]]
                })
            })
            .collect();
        Ok(propagate_step(
            &t,
            &self.label_distributions,
            &clamp,
            uniform_row(self.present_classes()),
        ))
    }

    /// Argmax labels of the training points (ties to class 0).
    pub fn transduction(&self) -> Vec<Label> {
        (0..self.label_distributions.rows())
            .map(|i| {
                let r = self.label_distributions.row(i);
                Label::from(r[1] > r[0])
            })
            .collect()
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<Label>> {
        self.predict_detailed(x).map(|(labels, _)| labels)
    }

    /// Kernel-weighted vote over training distributions. Also returns how
    /// many points had zero total weight and fell back to class 0.
    pub fn predict_detailed(&self, x: &DenseMatrix) -> Result<(Vec<Label>, usize)> {
        if x.rows() > 0 && x.cols() != self.training_points.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.training_points.cols(),
                found: x.cols(),
            });
        }
        let mut fallbacks = 0;
        let mut labels = Vec::with_capacity(x.rows());
        for q in 0..x.rows() {
            let query = x.row(q);
            let mut score = [0.0f64; 2];
            let mut total = 0.0;
            let mut vote = |j: usize, w: f64| {
                let r = self.label_distributions.row(j);
                score[0] += w * r[0];
                score[1] += w * r[1];
                total += w;
            };
            match self.params.kernel {
                Kernel::Knn { n_neighbors } => {
                    for j in nearest_rows(&self.training_points, query, n_neighbors, None) {
                        vote(j, 1.0);
                    }
                }
                Kernel::Rbf { gamma } => {
                    for j in 0..self.training_points.rows() {
                        let d2: f64 = self
                            .training_points
                            .row(j)
                            .iter()
                            .zip(query)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        vote(j, (-gamma * d2).exp());
                    }
                }
            }
            if total == 0.0 {
                fallbacks += 1;
            }
            labels.push(Label::from(score[1] > score[0]));
        }
        Ok((labels, fallbacks))
    }
}
