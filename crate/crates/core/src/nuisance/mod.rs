//! Nuisance functions for the risk estimators:
//!
//! * `p(x) = Pr[D = 1 | X = x]`, the probability that a row with covariates
//!   `x` belongs to the source sample, and
//! * `h(x) = E[L(Y, g(X*)) | X = x, D = 1]`, the expected loss of the model
//!   given covariates, learned on source rows only.
//!
//! Both are fitted by (ridge-penalized) regression over a [`FeatureMap`].

pub mod crossfit;
pub mod design;
pub mod logistic;
pub mod spline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crossfit::{cross_fit, cross_fit_with_folds, stratified_folds, NuisanceConfig, NuisanceEstimates};
pub use design::{build_design, Design, DesignBasis, FeatureMap, SplineConfig};
pub use logistic::{expit, fit_least_squares, fit_logistic_irls, predict_prob, IrlsOptions, LogisticFit};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::Loss;

/// Default lower/upper truncation for fitted source probabilities.
pub const DEFAULT_EPSILON: f64 = 1e-4;

const CV_FOLDS: usize = 3;

/// Expected squared loss of prediction `g` for a binary outcome with
/// `Pr[Y = 1] = q`: `q (1 - g)^2 + (1 - q) g^2 = q (1 - 2g) + g^2`.
pub fn h_from_outcome_prob(q: f64, g: f64) -> f64 {
    q * (1.0 - 2.0 * g) + g * g
}

/// How `h` is learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HStrategy {
    /// Model `Pr[Y = 1 | X, D = 1]` by logistic regression and plug it into
    /// [`h_from_outcome_prob`]. Squared loss and binary outcomes only.
    Binary,
    /// Least-squares regression of the observed losses on the features.
    Direct,
}

impl fmt::Display for HStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HStrategy::Binary => "binary",
            HStrategy::Direct => "direct",
        })
    }
}

impl FromStr for HStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(HStrategy::Binary),
            "direct" => Ok(HStrategy::Direct),
            other => Err(Error::InvalidArgument(format!("unknown h strategy `{other}`"))),
        }
    }
}

/// Convergence summary of one nuisance fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub target: &'static str,
    pub map: &'static str,
    pub converged: bool,
    pub iterations: usize,
    pub ridge: f64,
    pub max_abs_score: f64,
}

/// Per-row fold label for ridge selection, derived from the covariate values
/// so it does not depend on row order.
fn content_fold(x: &[f64]) -> usize {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for v in x {
        h ^= v.to_bits();
        // splitmix64 finalizer
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    (h % CV_FOLDS as u64) as usize
}

#[derive(Clone, Copy)]
enum Response {
    Binary,
    Continuous,
}

fn fit_any(design: &Design, targets: &[f64], weights: &[f64], ridge: f64, kind: Response) -> Result<(Vec<f64>, Option<LogisticFit>)> {
    match kind {
        Response::Binary => {
            let fit = fit_logistic_irls(design, targets, weights, ridge, &IrlsOptions::default())?;
            Ok((fit.coefficients.clone(), Some(fit)))
        }
        Response::Continuous => Ok((fit_least_squares(design, targets, weights, ridge)?, None)),
    }
}

fn validation_loss(design: &Design, beta: &[f64], targets: &[f64], weights: &[f64], kind: Response) -> f64 {
    let eta = design.mul_vec(beta);
    eta.iter()
        .zip(targets)
        .zip(weights)
        .map(|((&e, &y), &w)| match kind {
            Response::Binary => {
                let p = expit(e).clamp(1e-15, 1.0 - 1e-15);
                -2.0 * w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            }
            Response::Continuous => w * (y - e) * (y - e),
        })
        .sum()
}

/// Picks the ridge penalty from `grid` by `CV_FOLDS`-fold validation loss.
fn select_ridge(design: &Design, targets: &[f64], weights: &[f64], folds: &[usize], grid: &[f64], kind: Response) -> Result<f64> {
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let mut best: Option<(f64, f64)> = None;
    let mut first_err = None;
    for &lambda in grid {
        let mut total = 0.0;
        for k in 0..CV_FOLDS {
            let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != k).collect();
            let test: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == k).collect();
            if test.is_empty() {
                continue;
            }
            let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let fitted = fit_any(&design.select_rows(&train), &pick(targets, &train), &pick(weights, &train), lambda, kind);
            match fitted {
                Ok((beta, _)) => {
                    total += validation_loss(&design.select_rows(&test), &beta, &pick(targets, &test), &pick(weights, &test), kind)
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                    total = f64::INFINITY;
                    break;
                }
            }
        }
        if total.is_finite() && best.is_none_or(|(_, b)| total < b) {
            best = Some((lambda, total));
        }
    }
    match (best, first_err) {
        (Some((lambda, _)), _) => Ok(lambda),
        (None, Some(e)) => Err(e),
        (None, None) => Ok(grid[0]),
    }
}

/// A regression of one response on a learned feature basis.
#[derive(Debug, Clone)]
struct FittedRegression {
    basis: DesignBasis,
    coefficients: Vec<f64>,
    diagnostics: FitDiagnostics,
}

impl FittedRegression {
    fn fit(
        target: &'static str,
        data: &Dataset,
        rows: &[usize],
        map: &FeatureMap,
        responses: &[f64],
        weights: &[f64],
        kind: Response,
    ) -> Result<Self> {
        let basis = DesignBasis::learn(map, data, rows)?;
        let design = basis.transform(data, rows)?;
        let ridge = match map {
            FeatureMap::Spline(cfg) => {
                let folds: Vec<usize> = rows.iter().map(|&i| content_fold(data.row(i))).collect();
                select_ridge(&design, responses, weights, &folds, &cfg.ridge_grid, kind)?
            }
            _ => 0.0,
        };
        let (coefficients, fit) = fit_any(&design, responses, weights, ridge, kind)?;
        let diagnostics = match fit {
            Some(f) => FitDiagnostics {
                target,
                map: map.label(),
                converged: f.converged,
                iterations: f.iterations,
                ridge,
                max_abs_score: f.max_abs_score,
            },
            None => FitDiagnostics {
                target,
                map: map.label(),
                converged: true,
                iterations: 1,
                ridge,
                max_abs_score: 0.0,
            },
        };
        Ok(Self {
            basis,
            coefficients,
            diagnostics,
        })
    }

    fn linear_predictor(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        Ok(self.basis.transform(data, rows)?.mul_vec(&self.coefficients))
    }
}

/// Fitted model for `Pr[D = 1 | X]`.
#[derive(Debug, Clone)]
pub struct PropensityModel(FittedRegression);

impl PropensityModel {
    /// Logistic regression of `D` on the features of `rows`. Observation
    /// weights are the survey weights when `survey_weighted`, else 1.
    pub fn fit(data: &Dataset, rows: &[usize], map: &FeatureMap, survey_weighted: bool) -> Result<Self> {
        let labels: Vec<f64> = rows.iter().map(|&i| if data.is_source(i) { 1.0 } else { 0.0 }).collect();
        let weights: Vec<f64> = rows
            .iter()
            .map(|&i| if survey_weighted { data.weights()[i] } else { 1.0 })
            .collect();
        FittedRegression::fit("p", data, rows, map, &labels, &weights, Response::Binary).map(Self)
    }

    /// Untruncated probabilities for `rows`.
    pub fn predict(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        Ok(self.0.linear_predictor(data, rows)?.into_iter().map(expit).collect())
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.0.diagnostics
    }
}

/// Fitted model for `h(x) = E[L(Y, g(X*)) | X = x, D = 1]`.
#[derive(Debug, Clone)]
pub struct ConditionalLossModel {
    strategy: HStrategy,
    inner: FittedRegression,
}

impl ConditionalLossModel {
    /// Fits on the source rows among `rows`. `predictions` holds the model
    /// prediction `g` for every row of `data`.
    pub fn fit(
        data: &Dataset,
        rows: &[usize],
        predictions: &[f64],
        loss: Loss,
        map: &FeatureMap,
        strategy: HStrategy,
    ) -> Result<Self> {
        let source: Vec<usize> = rows.iter().copied().filter(|&i| data.is_source(i)).collect();
        if source.is_empty() {
            return Err(Error::EmptySource);
        }
        let outcomes = source
            .iter()
            .map(|&i| data.outcome()[i].ok_or_else(|| Error::InvalidArgument(format!("source row {i} has no outcome"))))
            .collect::<Result<Vec<f64>>>()?;
        let ones = vec![1.0; source.len()];
        let inner = match strategy {
            HStrategy::Binary => {
                if loss != Loss::Squared {
                    return Err(Error::InvalidStrategy(format!(
                        "the binary-outcome strategy needs squared (Brier) loss, not {loss}"
                    )));
                }
                if let Some(y) = outcomes.iter().find(|&&y| y != 0.0 && y != 1.0) {
                    return Err(Error::InvalidStrategy(format!(
                        "the binary-outcome strategy needs 0/1 outcomes, found {y}; use the direct strategy"
                    )));
                }
                FittedRegression::fit("h", data, &source, map, &outcomes, &ones, Response::Binary)?
            }
            HStrategy::Direct => {
                let losses = source
                    .iter()
                    .zip(&outcomes)
                    .map(|(&i, &y)| loss.evaluate(y, predictions[i]))
                    .collect::<Result<Vec<f64>>>()?;
                FittedRegression::fit("h", data, &source, map, &losses, &ones, Response::Continuous)?
            }
        };
        Ok(Self { strategy, inner })
    }

    pub fn predict(&self, data: &Dataset, rows: &[usize], predictions: &[f64]) -> Result<Vec<f64>> {
        let eta = self.inner.linear_predictor(data, rows)?;
        Ok(match self.strategy {
            HStrategy::Binary => eta
                .into_iter()
                .zip(rows)
                .map(|(e, &i)| h_from_outcome_prob(expit(e), predictions[i]))
                .collect(),
            HStrategy::Direct => eta.into_iter().map(|e| e.max(0.0)).collect(),
        })
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.inner.diagnostics
    }
}

/// Clips probabilities into `[epsilon, 1 - epsilon]`; returns how many moved.
pub fn truncate_probs(p: &mut [f64], epsilon: f64) -> usize {
    let mut count = 0;
    for v in p.iter_mut() {
        let c = v.clamp(epsilon, 1.0 - epsilon);
        if c != *v {
            count += 1;
            *v = c;
        }
    }
    count
}

/// Source probabilities for every row, fitted on all rows and truncated.
#[derive(Debug, Clone)]
pub struct PropensityEstimates {
    pub p_hat: Vec<f64>,
    pub truncation_count: usize,
    pub diagnostics: FitDiagnostics,
}

pub fn fit_p(data: &Dataset, map: &FeatureMap, survey_weighted: bool, epsilon: f64) -> Result<PropensityEstimates> {
    check_epsilon(epsilon)?;
    let all: Vec<usize> = (0..data.n()).collect();
    let model = PropensityModel::fit(data, &all, map, survey_weighted)?;
    let mut p_hat = model.predict(data, &all)?;
    let truncation_count = truncate_probs(&mut p_hat, epsilon);
    Ok(PropensityEstimates {
        p_hat,
        truncation_count,
        diagnostics: model.diagnostics().clone(),
    })
}

/// `h` fitted on the source rows and evaluated on every row.
pub fn fit_h(
    data: &Dataset,
    predictions: &[f64],
    loss: Loss,
    map: &FeatureMap,
    strategy: HStrategy,
) -> Result<(Vec<f64>, FitDiagnostics)> {
    let all: Vec<usize> = (0..data.n()).collect();
    let model = ConditionalLossModel::fit(data, &all, predictions, loss, map, strategy)?;
    Ok((model.predict(data, &all, predictions)?, model.diagnostics().clone()))
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("truncation epsilon must be in [0, 0.5), got {epsilon}")));
    }
    Ok(())
}
