//! Weighted, optionally ridge-penalized logistic regression by iteratively
//! reweighted least squares (Newton's method with step halving), plus the
//! matching least-squares solver.
//!
//! Column 0 of every design is the intercept and is never penalized.

use nalgebra::{DMatrix, DVector};

use super::design::{dot, Design};
use crate::error::{Error, Result};

/// Overflow-safe logistic function.
pub fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    /// Convergence threshold on the infinity norm of the penalized score,
    /// per unit of mean observation weight.
    pub score_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// With no ridge, a converged fit whose linear predictor exceeds this in
    /// magnitude is treated as (quasi-)separated.
    pub separation_eta: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            score_tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
            separation_eta: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Infinity norm of the penalized score at the returned coefficients.
    pub max_abs_score: f64,
    /// Threshold the score was held to (scaled by the mean weight).
    pub score_tolerance: f64,
    pub ridge: f64,
    /// Penalized log-likelihood after each accepted step, starting at zero
    /// coefficients.
    pub objective_trace: Vec<f64>,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::InvalidArgument(format!(
                "design row has width {}, fit has {} coefficients",
                row.len(),
                self.coefficients.len()
            )));
        }
        Ok(dot(row, &self.coefficients))
    }
}

/// Probability `expit(beta . x)` for one design row.
pub fn predict_prob(fit: &LogisticFit, row: &[f64]) -> Result<f64> {
    fit.linear_predictor(row).map(expit)
}

pub fn predict_probs(fit: &LogisticFit, design: &Design) -> Result<Vec<f64>> {
    (0..design.rows()).map(|i| predict_prob(fit, design.row(i))).collect()
}

/// Upper triangle of `X' diag(w) X`, accumulated over the nonzero entries
/// of each row (spline rows are mostly zeros).
fn weighted_gram(design: &Design, w: &[f64]) -> DMatrix<f64> {
    let m = design.cols();
    let mut acc = vec![0.0; m * m];
    let mut nz: Vec<usize> = Vec::with_capacity(m);
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let row = design.row(i);
        nz.clear();
        nz.extend((0..m).filter(|&j| row[j] != 0.0));
        for (a, &j) in nz.iter().enumerate() {
            let xj = wi * row[j];
            let base = j * m;
            for &k in &nz[a..] {
                acc[base + k] += xj * row[k];
            }
        }
    }
    let mut g = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            g[(j, k)] = acc[j * m + k];
            g[(k, j)] = acc[j * m + k];
        }
    }
    g
}

/// Smallest acceptable squared Cholesky pivot relative to the largest
/// diagonal entry.
const PIVOT_RATIO: f64 = 1e-13;

fn solve_spd(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let max_diag = matrix.diagonal().iter().fold(0.0f64, |a, v| a.max(*v));
    let ch = matrix.cholesky().ok_or(Error::SingularDesign)?;
    let min_pivot = ch.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v * v));
    if !(min_pivot > PIVOT_RATIO * max_diag) {
        return Err(Error::SingularDesign);
    }
    let x = ch.solve(&rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularDesign);
    }
    Ok(x)
}

fn check_inputs(design: &Design, targets: &[f64], weights: &[f64], ridge: f64) -> Result<()> {
    let n = design.rows();
    if targets.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows but {} targets and {} weights",
            targets.len(),
            weights.len()
        )));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge penalty must be >= 0, got {ridge}")));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidArgument(format!("observation weights must be positive, got {w}")));
    }
    if ridge == 0.0 && n < design.cols() {
        return Err(Error::SingularDesign);
    }
    Ok(())
}

fn penalized_loglik(eta: &[f64], labels: &[f64], weights: &[f64], beta: &[f64], ridge: f64) -> f64 {
    let ll: f64 = eta
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&e, &y), &w)| w * (y * e - softplus(e)))
        .sum();
    ll - 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Maximizes `sum_i w_i [y_i eta_i - log(1 + e^eta_i)] - ridge/2 |beta_{1..}|^2`.
pub fn fit_logistic_irls(
    design: &Design,
    labels: &[f64],
    weights: &[f64],
    ridge: f64,
    opts: &IrlsOptions,
) -> Result<LogisticFit> {
    check_inputs(design, labels, weights, ridge)?;
    if let Some(y) = labels.iter().find(|y| **y != 0.0 && **y != 1.0) {
        return Err(Error::InvalidArgument(format!("logistic labels must be 0 or 1, got {y}")));
    }
    if ridge == 0.0 && (labels.iter().all(|&y| y == 1.0) || labels.iter().all(|&y| y == 0.0)) {
        return Err(Error::Separation("all labels are equal".into()));
    }

    let n = design.rows();
    let m = design.cols();
    let mean_w = weights.iter().sum::<f64>() / n as f64;
    let tol = opts.score_tol * mean_w.max(1.0);

    let mut beta = vec![0.0; m];
    let mut eta = vec![0.0; n];
    let mut objective = penalized_loglik(&eta, labels, weights, &beta, ridge);
    let mut trace = vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    let mut score_norm;

    let score_at = |eta: &[f64], beta: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut score = vec![0.0; m];
        let mut curv = vec![0.0; n];
        for i in 0..n {
            let p = expit(eta[i]);
            let r = weights[i] * (labels[i] - p);
            for (s, x) in score.iter_mut().zip(design.row(i)) {
                *s += r * x;
            }
            curv[i] = weights[i] * p * (1.0 - p);
        }
        for j in 1..m {
            score[j] -= ridge * beta[j];
        }
        (score, curv)
    };

    loop {
        let (score, curv) = score_at(&eta, &beta);
        score_norm = score.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        if score_norm <= tol {
            converged = true;
            break;
        }
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;

        let mut hess = weighted_gram(design, &curv);
        for j in 1..m {
            hess[(j, j)] += ridge;
        }
        let step = solve_spd(hess, DVector::from_vec(score))?;

        // Near the optimum the true gain is far below the rounding noise of
        // the summed objective; steps within that noise count as ascent.
        let slack = 1e-12 * objective.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let cand_eta = design.mul_vec(&cand);
            let cand_obj = penalized_loglik(&cand_eta, labels, weights, &cand, ridge);
            if cand_obj.is_finite() && cand_obj >= objective - slack {
                beta = cand;
                eta = cand_eta;
                objective = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no ascent along the Newton direction: as close as f64 allows
            let (score, _) = score_at(&eta, &beta);
            score_norm = score.iter().fold(0.0f64, |a, s| a.max(s.abs()));
            converged = score_norm <= tol;
            break;
        }
        trace.push(objective);
    }

    if ridge == 0.0 {
        let max_eta = eta.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        if max_eta > opts.separation_eta {
            return Err(Error::Separation(format!(
                "fitted linear predictor reaches {max_eta:.1}; probabilities are numerically 0 or 1"
            )));
        }
    }

    Ok(LogisticFit {
        coefficients: beta,
        converged,
        iterations,
        max_abs_score: score_norm,
        score_tolerance: tol,
        ridge,
        objective_trace: trace,
    })
}

/// Weighted ridge least squares; the intercept (column 0) is unpenalized.
pub fn fit_least_squares(design: &Design, targets: &[f64], weights: &[f64], ridge: f64) -> Result<Vec<f64>> {
    check_inputs(design, targets, weights, ridge)?;
    let m = design.cols();
    let mut gram = weighted_gram(design, weights);
    for j in 1..m {
        gram[(j, j)] += ridge;
    }
    let mut rhs = DVector::zeros(m);
    for i in 0..design.rows() {
        let r = weights[i] * targets[i];
        for (j, x) in design.row(i).iter().enumerate() {
            rhs[j] += r * x;
        }
    }
    Ok(solve_spd(gram, rhs)?.iter().copied().collect())
}
