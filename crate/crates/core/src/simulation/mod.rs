//! Monte Carlo studies: the Gaussian covariate-shift scenario with its
//! estimator arms, and semi-synthetic source/target splits of a labeled
//! dataset.

pub mod split;
pub mod study;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::nuisance::expit;

pub use split::{
    run_split_eval, screening_cohort, semi_synthetic_split, summarize_split_eval, SplitDesign, SplitEvalConfig,
    SplitEvalRun, SplitMode, SplitResult, SplitSummaryRow,
};
pub use study::{
    replicate_draw, replicate_eval_data, run_replicate, run_study, summarize, summarize_estimates, target_risk_mc, Arm, NuisanceSpec, ReplicateDraw, ReplicateResult,
    StudyRun, SummaryRow,
};

/// `intercept + sum_{j < active} (linear * x_j + quadratic * x_j^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexModel {
    pub intercept: f64,
    pub linear: f64,
    pub quadratic: f64,
    pub active: usize,
}

impl Default for IndexModel {
    fn default() -> Self {
        Self {
            intercept: -0.3,
            linear: 0.2,
            quadratic: 0.3,
            active: 3,
        }
    }
}

impl IndexModel {
    pub fn eta(&self, x: &[f64]) -> f64 {
        self.intercept
            + x[..self.active]
                .iter()
                .map(|&v| self.linear * v + self.quadratic * v * v)
                .sum::<f64>()
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        expit(self.eta(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_total: usize,
    pub dim: usize,
    /// Covariance entry `(i, j)` is `rho^|i - j|`.
    pub rho: f64,
    /// Model for `Pr[D = 1 | X]`.
    pub selection: IndexModel,
    /// Model for `Pr[Y = 1 | X]`.
    pub outcome: IndexModel,
    /// Share of source rows used to fit the prediction model.
    pub train_fraction: f64,
    pub loss: Loss,
    pub replications: usize,
    pub seed: u64,
    /// Accepted target draws per replicate for the numeric truth.
    pub truth_draws: usize,
    pub epsilon: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_total: 1000,
            dim: 10,
            rho: 0.5,
            selection: IndexModel::default(),
            outcome: IndexModel::default(),
            train_fraction: 2.0 / 3.0,
            loss: Loss::Squared,
            replications: 1000,
            seed: 1,
            truth_draws: 100_000,
            epsilon: crate::nuisance::DEFAULT_EPSILON,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        for (name, m) in [("selection", &self.selection), ("outcome", &self.outcome)] {
            if m.active > self.dim {
                return bad(format!("{name} model uses {} covariates but dim is {}", m.active, self.dim));
            }
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad(format!("rho must be in (-1, 1), got {}", self.rho));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if self.n_total < 10 {
            return bad(format!("n_total {} is too small", self.n_total));
        }
        if self.replications == 0 || self.truth_draws == 0 {
            return bad("replications and truth_draws must be positive".into());
        }
        crate::nuisance::check_epsilon(self.epsilon)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        ar_covariance(self.dim, self.rho)
    }

    pub fn names(&self) -> Vec<String> {
        (1..=self.dim).map(|j| format!("x{j}")).collect()
    }
}

pub fn ar_covariance(dim: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Draws from `N(0, Sigma)` as `L z` with `L` the lower Cholesky factor and
/// `z` standard normal.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    dim: usize,
    // lower factor, row-major
    factor: Vec<f64>,
}

impl MvnSampler {
    pub fn new(covariance: &DMatrix<f64>) -> Result<Self> {
        let dim = covariance.nrows();
        if covariance.ncols() != dim || dim == 0 {
            return Err(Error::InvalidArgument("covariance must be square and non-empty".into()));
        }
        let asym = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .any(|(i, j)| (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12);
        if asym {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = nalgebra::Cholesky::new(covariance.clone()).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let factor = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        Ok(Self { dim, factor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn draw_into<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..self.dim {
            let row = &self.factor[i * self.dim..i * self.dim + i + 1];
            out[i] = row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum();
        }
    }
}

/// `n` rows of `N(0, covariance)`, row-major.
pub fn sample_mvn<R: Rng>(n: usize, covariance: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = MvnSampler::new(covariance)?;
    let d = sampler.dim();
    let mut out = vec![0.0; n * d];
    let mut z = vec![0.0; d];
    for row in out.chunks_mut(d) {
        sampler.draw_into(rng, &mut z, row);
    }
    Ok(out)
}

/// One scenario dataset of `spec.n_total` rows. Outcomes are kept on every
/// row; estimators only see those of source rows.
pub fn dgp_draw<R: Rng>(spec: &ScenarioSpec, sampler: &MvnSampler, rng: &mut R) -> Dataset {
    let d = spec.dim;
    let n = spec.n_total;
    let mut x = vec![0.0; n * d];
    let mut source = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    let mut z = vec![0.0; d];
    for row in x.chunks_mut(d) {
        sampler.draw_into(rng, &mut z, row);
        source.push(rng.gen::<f64>() < spec.selection.prob(row));
        outcome.push(Some(if rng.gen::<f64>() < spec.outcome.prob(row) { 1.0 } else { 0.0 }));
    }
    Dataset::new(spec.names(), x, source, outcome).expect("generated shapes are consistent")
}

/// Monte Carlo estimate of `Pr[D = 1]` under the scenario.
pub fn source_fraction<R: Rng>(spec: &ScenarioSpec, sampler: &MvnSampler, draws: usize, rng: &mut R) -> f64 {
    let mut x = vec![0.0; spec.dim];
    let mut z = vec![0.0; spec.dim];
    let mut hits = 0usize;
    for _ in 0..draws {
        sampler.draw_into(rng, &mut z, &mut x);
        if rng.gen::<f64>() < spec.selection.prob(&x) {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}
