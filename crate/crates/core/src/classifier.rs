//! L2-regularized binary logistic regression.
//!
//! Minimizes `(1/n) Σ logloss + (λ / 2n) ‖w‖²` (bias unpenalized) by
//! full-batch gradient descent from zero. Each iteration proposes a
//! Barzilai-Borwein step and backtracks until the Armijo condition holds, so
//! the objective never increases between accepted steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        LogRegOptions {
            lambda: 1.0,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub converged: bool,
    pub iterations_used: usize,
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn validate(x: &SparseMatrix, y: &[bool]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(
            "feature matrix contains NaN or infinite values".into(),
        ));
    }
    Ok(())
}

fn objective(x: &SparseMatrix, y: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let data: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let z = x.row_dot(i, w) + b;
            softplus(z) - if yi { z } else { 0.0 }
        })
        .sum();
    data / n + lambda / (2.0 * n) * w.iter().map(|v| v * v).sum::<f64>()
}

/// Objective and gradient; the gradient has the bias component last.
fn objective_and_gradient(
    x: &SparseMatrix,
    y: &[bool],
    w: &[f64],
    b: f64,
    lambda: f64,
) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let d = w.len();
    let mut grad = vec![0.0; d + 1];
    let mut data = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let z = x.row_dot(i, w) + b;
        let t = if yi { 1.0 } else { 0.0 };
        data += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        let (idx, val) = x.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            grad[j] += r * v;
        }
        grad[d] += r;
    }
    let mut wsq = 0.0;
    for j in 0..d {
        grad[j] = grad[j] / n + lambda / n * w[j];
        wsq += w[j] * w[j];
    }
    grad[d] /= n;
    (data / n + lambda / (2.0 * n) * wsq, grad)
}

/// The training objective and its gradient at `model`'s parameters.
pub fn loss_and_gradient(
    model: &LogisticModel,
    x: &SparseMatrix,
    y: &[bool],
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    validate(x, y)?;
    if model.weights.len() != x.n_cols() {
        return Err(Error::Dimension {
            expected: x.n_cols(),
            got: model.weights.len(),
        });
    }
    Ok(objective_and_gradient(
        x,
        y,
        &model.weights,
        model.bias,
        lambda,
    ))
}

pub fn fit_logreg(x: &SparseMatrix, y: &[bool], options: &LogRegOptions) -> Result<LogisticModel> {
    fit_logreg_traced(x, y, options, &mut Vec::new())
}

/// Like [`fit_logreg`], additionally recording the objective at the start
/// and after every accepted step.
pub fn fit_logreg_traced(
    x: &SparseMatrix,
    y: &[bool],
    options: &LogRegOptions,
    trace: &mut Vec<f64>,
) -> Result<LogisticModel> {
    validate(x, y)?;
    if y.len() < 2 {
        return Err(Error::Invalid(format!(
            "logistic regression needs at least 2 rows, got {}",
            y.len()
        )));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClass(String::new()));
    }
    if options.lambda.is_nan() || options.lambda < 0.0 {
        return Err(Error::Invalid(format!(
            "lambda must be >= 0, got {}",
            options.lambda
        )));
    }
    let d = x.n_cols();
    let lambda = options.lambda;
    let mut params = vec![0.0; d + 1];
    let (mut f, mut g) = objective_and_gradient(x, y, &params[..d], params[d], lambda);
    trace.push(f);

    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut candidate = vec![0.0; d + 1];

    while iterations < options.max_iter {
        if inf_norm(&g) < options.tol {
            converged = true;
            break;
        }
        iterations += 1;
        if let Some((p_old, g_old)) = prev.take() {
            let (mut ss, mut sy) = (0.0, 0.0);
            for j in 0..=d {
                let s = params[j] - p_old[j];
                let yv = g[j] - g_old[j];
                ss += s * s;
                sy += s * yv;
            }
            if sy > 0.0 && ss > 0.0 {
                step = (ss / sy).clamp(1e-10, 1e10);
            } else {
                step *= 2.0;
            }
        }
        let gsq: f64 = g.iter().map(|v| v * v).sum();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for j in 0..=d {
                candidate[j] = params[j] - step * g[j];
            }
            let fc = objective(x, y, &candidate[..d], candidate[d], lambda);
            if fc <= f - ARMIJO_C * step * gsq {
                accepted = Some(fc);
                break;
            }
            step *= 0.5;
        }
        let Some(fc) = accepted else {
            // No decrease representable in floating point; we are at the optimum
            // to machine precision.
            break;
        };
        let old_params = std::mem::replace(&mut params, candidate.clone());
        let (f_new, g_new) = objective_and_gradient(x, y, &params[..d], params[d], lambda);
        debug_assert!((f_new - fc).abs() <= 1e-12 * fc.abs().max(1.0));
        let old_g = std::mem::replace(&mut g, g_new);
        prev = Some((old_params, old_g));
        f = f_new;
        trace.push(f);
    }
    if !converged && inf_norm(&g) < options.tol {
        converged = true;
    }
    let bias = params.pop().unwrap_or(0.0);
    Ok(LogisticModel {
        weights: params,
        bias,
        lambda,
        converged,
        iterations_used: iterations,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn zeros(d: usize) -> Self {
        LogisticModel {
            weights: vec![0.0; d],
            bias: 0.0,
            lambda: 0.0,
            converged: false,
            iterations_used: 0,
        }
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.decision(x).map(sigmoid)
    }

    /// Probability for one row of a sparse matrix of matching width.
    pub fn predict_row(&self, x: &SparseMatrix, i: usize) -> Result<f64> {
        if x.n_cols() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                got: x.n_cols(),
            });
        }
        Ok(sigmoid(x.row_dot(i, &self.weights) + self.bias))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1000.0) - 1.0).abs() < 1e-15);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        let tiny = sigmoid(-600.0);
        assert!(tiny < 1e-200 && !tiny.is_nan());
        assert!(!sigmoid(-1e308).is_nan());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    fn separable() -> (SparseMatrix, Vec<bool>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            rows.push(vec![-1.0]);
            y.push(false);
            rows.push(vec![1.0]);
            y.push(true);
        }
        (SparseMatrix::from_dense(1, &rows), y)
    }

    #[test]
    fn separates_one_dimensional_data() {
        let (x, y) = separable();
        let m = fit_logreg(&x, &y, &LogRegOptions::default()).unwrap();
        let acc = (0..y.len())
            .filter(|&i| (m.predict_row(&x, i).unwrap() >= 0.5) == y[i])
            .count();
        assert_eq!(acc, y.len());
    }

    #[test]
    fn heavy_penalty_shrinks_to_prior() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            rows.push(vec![(i % 7) as f64 - 3.0, (i % 3) as f64]);
            y.push(i % 4 == 0);
        }
        let x = SparseMatrix::from_dense(2, &rows);
        let m = fit_logreg(
            &x,
            &y,
            &LogRegOptions {
                lambda: 1e6,
                ..LogRegOptions::default()
            },
        )
        .unwrap();
        let norm = m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "norm {norm}");
        assert!((sigmoid(m.bias) - 0.25).abs() < 1e-3);
    }

    #[test]
    fn single_class_and_nan_rejected() {
        let x = SparseMatrix::from_dense(1, &[vec![1.0], vec![2.0]]);
        assert!(matches!(
            fit_logreg(&x, &[true, true], &LogRegOptions::default()),
            Err(Error::SingleClass(_))
        ));
        let x = SparseMatrix::from_dense(1, &[vec![f64::NAN], vec![2.0]]);
        assert!(fit_logreg(&x, &[true, false], &LogRegOptions::default()).is_err());
    }

    #[test]
    fn predict_examples() {
        let m = LogisticModel::zeros(3);
        assert_eq!(m.predict_proba(&[4.0, -2.0, 9.0]).unwrap(), 0.5);
        let m = LogisticModel {
            weights: vec![1.0],
            ..LogisticModel::zeros(1)
        };
        assert!((m.predict_proba(&[3f64.ln()]).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(
            m.predict_proba(&[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn loss_at_zero_is_ln_two() {
        let x = SparseMatrix::from_dense(2, &[vec![1.0, 2.0], vec![3.0, -1.0]]);
        let (loss, grad) =
            loss_and_gradient(&LogisticModel::zeros(2), &x, &[true, false], 0.0).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(grad.len(), 3);
    }

    #[test]
    fn penalty_gradient_term_is_lambda_w_over_n() {
        let x = SparseMatrix::from_dense(2, &[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]]);
        let y = [true, false, true];
        let m = LogisticModel {
            weights: vec![0.3, -0.7],
            bias: 0.1,
            ..LogisticModel::zeros(2)
        };
        let (_, g0) = loss_and_gradient(&m, &x, &y, 0.0).unwrap();
        let (_, g1) = loss_and_gradient(&m, &x, &y, 2.5).unwrap();
        for j in 0..2 {
            assert!((g1[j] - g0[j] - 2.5 * m.weights[j] / 3.0).abs() < 1e-15);
        }
        assert_eq!(g1[2], g0[2]);
    }
}
