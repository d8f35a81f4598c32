//! Artificial source/target splits of a fully labeled dataset, so that an
//! oracle estimate from the target outcomes is available for comparison.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::data::{Dataset, Mode};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::inference::{bootstrap_many, sample_sd, BootstrapPlan, CiMethod, ResampleUnit};
use crate::loss::Loss;
use crate::model::fit_main_effects;
use crate::nuisance::{expit, NuisanceConfig};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitMode {
    /// Every row is a source row with probability 1/2.
    Uniform,
    /// Source membership follows a logistic model with coefficient `+m` on
    /// covariates positively associated with the outcome and `-m` otherwise.
    Shifted(f64),
}

/// Resolved membership model for one labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDesign {
    coefficients: Vec<f64>,
}

impl SplitDesign {
    pub fn new(labeled: &Dataset, mode: SplitMode) -> Result<Self> {
        let coefficients = match mode {
            SplitMode::Uniform => vec![0.0; labeled.dim()],
            SplitMode::Shifted(m) => {
                if !m.is_finite() {
                    return Err(Error::InvalidArgument(format!("shift magnitude {m} is not finite")));
                }
                let all: Vec<usize> = (0..labeled.n()).collect();
                let assoc = fit_main_effects(labeled, &all, labeled.names())?;
                assoc
                    .model
                    .coefficients
                    .iter()
                    .map(|&b| if b > 0.0 { m } else { -m })
                    .collect()
            }
        };
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn source_prob(&self, x: &[f64]) -> f64 {
        expit(self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum())
    }

    /// Split number `index`: same rows, fresh source indicator.
    pub fn draw(&self, labeled: &Dataset, seed: u64, index: u64) -> Result<Dataset> {
        let mut rng = stream(seed, index, Purpose::Membership);
        let source = (0..labeled.n())
            .map(|i| rng.gen::<f64>() < self.source_prob(labeled.row(i)))
            .collect();
        labeled.clone().with_source(source)
    }
}

pub fn semi_synthetic_split(labeled: &Dataset, mode: SplitMode, seed: u64) -> Result<Dataset> {
    SplitDesign::new(labeled, mode)?.draw(labeled, seed, 0)
}

/// A fully labeled synthetic cohort loosely shaped like a lung screening
/// trial: centered continuous risk factors, a few binary ones, and a binary
/// outcome from a main-effects logistic model (roughly 30% positive).
pub fn screening_cohort(n: usize, seed: u64) -> Dataset {
    let names = [
        "age",
        "bmi",
        "pack_years",
        "cigs_per_day",
        "years_quit",
        "male",
        "current_smoker",
        "family_history",
    ];
    let effects = [0.03, -0.04, 0.02, 0.015, -0.03, 0.2, 0.3, 0.4];
    let mut rng = stream(seed, 0, Purpose::Data);
    let male = Bernoulli::new(0.6).unwrap();
    let current = Bernoulli::new(0.5).unwrap();
    let family = Bernoulli::new(0.2).unwrap();
    let mut x = Vec::with_capacity(n * names.len());
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z = |rng: &mut crate::rng::StreamRng| rng.sample::<f64, _>(StandardNormal);
        let age = 5.0 * z(&mut rng);
        let bmi = 4.0 * z(&mut rng);
        let pack = 12.0 * z(&mut rng);
        let cigs = 0.4 * pack + 6.0 * z(&mut rng);
        let years_quit = 4.0 * z(&mut rng) - 0.05 * pack;
        let row = [
            age,
            bmi,
            pack,
            cigs,
            years_quit,
            male.sample(&mut rng) as u8 as f64,
            current.sample(&mut rng) as u8 as f64,
            family.sample(&mut rng) as u8 as f64,
        ];
        let eta = -1.3 + effects.iter().zip(&row).map(|(b, v)| b * v).sum::<f64>();
        y.push(Some(if rng.gen::<f64>() < expit(eta) { 1.0 } else { 0.0 }));
        x.extend_from_slice(&row);
    }
    Dataset::new(names.iter().map(|s| s.to_string()).collect(), x, vec![true; n], y)
        .expect("generated shapes are consistent")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitEvalConfig {
    pub mode: SplitMode,
    pub splits: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub loss: Loss,
    pub nuisance: NuisanceConfig,
    /// Bootstrap replicates per split; 0 skips the bootstrap.
    pub boot_replicates: usize,
}

impl Default for SplitEvalConfig {
    fn default() -> Self {
        Self {
            mode: SplitMode::Uniform,
            splits: 1000,
            seed: 1,
            train_fraction: 2.0 / 3.0,
            loss: Loss::Squared,
            nuisance: NuisanceConfig::default(),
            boot_replicates: 0,
        }
    }
}

/// Methods compared against the oracle, in report order.
pub const SPLIT_METHODS: [Method; 4] = [
    Method::Naive,
    Method::InverseOdds,
    Method::ConditionalLoss,
    Method::DoublyRobust,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub index: usize,
    /// The split methods followed by the oracle.
    pub estimates: Vec<(Method, f64)>,
    /// Bootstrap standard errors of the split methods, when requested.
    pub boot_se: Option<Vec<f64>>,
    pub n_eval: usize,
    pub n_target: usize,
}

impl SplitResult {
    pub fn get(&self, method: Method) -> Option<f64> {
        self.estimates.iter().find(|(m, _)| *m == method).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone)]
pub struct SplitEvalRun {
    pub splits: Vec<SplitResult>,
    pub coefficients: Vec<f64>,
}

fn run_one_split(labeled: &Dataset, design: &SplitDesign, cfg: &SplitEvalConfig, index: usize) -> Result<SplitResult> {
    let ds = design.draw(labeled, cfg.seed, index as u64)?;
    let mut src = ds.source_rows();
    src.shuffle(&mut stream(cfg.seed, index as u64, Purpose::Split));
    let n_train = (src.len() as f64 * cfg.train_fraction).round() as usize;
    if n_train == 0 || n_train == src.len() {
        return Err(Error::EmptySource);
    }
    let mut in_train = vec![false; ds.n()];
    for &i in &src[..n_train] {
        in_train[i] = true;
    }
    let train: Vec<usize> = (0..ds.n()).filter(|&i| in_train[i]).collect();
    let model = fit_main_effects(&ds, &train, ds.names())?.to_prediction_model();
    let eval_rows: Vec<usize> = (0..ds.n()).filter(|&i| !in_train[i]).collect();
    let eval = ds.take_rows(&eval_rows);
    if eval.n_target() == 0 {
        return Err(Error::EmptyTarget);
    }
    let g = model.predict_dataset(&eval)?;

    let mut methods = SPLIT_METHODS.to_vec();
    methods.push(Method::Oracle);
    let pipeline = PipelineConfig {
        loss: cfg.loss,
        nuisance: cfg.nuisance.clone(),
        methods,
        seed: cfg.seed ^ index as u64,
    };
    let out = run_pipeline(&eval, &g, &pipeline)?;

    let boot_se = if cfg.boot_replicates > 0 {
        let boot_cfg = PipelineConfig {
            methods: SPLIT_METHODS.to_vec(),
            ..pipeline.clone()
        };
        let plan = BootstrapPlan {
            replicates: cfg.boot_replicates,
            unit: ResampleUnit::Row,
            seed: stream(cfg.seed, index as u64, Purpose::Bootstrap).gen(),
            ci_method: CiMethod::Percentile,
        };
        let points: Vec<f64> = SPLIT_METHODS.iter().map(|&m| out.get(m).unwrap()).collect();
        let outcomes = bootstrap_many(&eval, &points, &plan, |bs, rows| {
            let g_b: Vec<f64> = rows.iter().map(|&i| g[i]).collect();
            let res = run_pipeline(bs, &g_b, &boot_cfg)?;
            Ok(res.estimates.iter().map(|(_, v)| *v).collect())
        })?;
        Some(outcomes.iter().map(|o| o.se).collect())
    } else {
        None
    };
    Ok(SplitResult {
        index,
        estimates: out.estimates,
        boot_se,
        n_eval: eval.n(),
        n_target: eval.n_target(),
    })
}

/// Repeats split + estimation `cfg.splits` times (in parallel, results in
/// split order). Fails on the first failing split.
pub fn run_split_eval(labeled: &Dataset, cfg: &SplitEvalConfig) -> Result<SplitEvalRun> {
    // membership is assigned later; only labels and covariates matter here
    let violations: Vec<_> = labeled
        .validate(Mode::Oracle)
        .into_iter()
        .filter(|v| v.rule != "no source rows" && v.rule != "no target rows")
        .collect();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    if cfg.splits == 0 {
        return Err(Error::InvalidArgument("need at least one split".into()));
    }
    let design = SplitDesign::new(labeled, cfg.mode)?;
    let splits = (0..cfg.splits)
        .into_par_iter()
        .map(|s| run_one_split(labeled, &design, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitEvalRun {
        splits,
        coefficients: design.coefficients,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSummaryRow {
    pub method: Method,
    pub avg_estimate: f64,
    /// Mean of `estimate - oracle` over splits.
    pub bias: f64,
    /// Monte Carlo standard error of `bias`.
    pub mc_se: f64,
    /// Standard deviation of the estimates across splits.
    pub sd: f64,
    pub avg_boot_se: Option<f64>,
}

pub fn summarize_split_eval(run: &SplitEvalRun) -> Vec<SplitSummaryRow> {
    let s = run.splits.len() as f64;
    let mut methods = SPLIT_METHODS.to_vec();
    methods.push(Method::Oracle);
    methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let est: Vec<f64> = run.splits.iter().map(|r| r.get(m).unwrap()).collect();
            let diff: Vec<f64> = run
                .splits
                .iter()
                .map(|r| r.get(m).unwrap() - r.get(Method::Oracle).unwrap())
                .collect();
            let boot: Option<Vec<f64>> = run
                .splits
                .iter()
                .map(|r| r.boot_se.as_ref().and_then(|v| v.get(k).copied()))
                .collect();
            SplitSummaryRow {
                method: m,
                avg_estimate: est.iter().sum::<f64>() / s,
                bias: diff.iter().sum::<f64>() / s,
                mc_se: sample_sd(&diff) / s.sqrt(),
                sd: sample_sd(&est),
                avg_boot_se: boot.map(|b| b.iter().sum::<f64>() / s),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_split_is_a_coin_flip() {
        let ds = screening_cohort(10_000, 1);
        let split = semi_synthetic_split(&ds, SplitMode::Uniform, 3).unwrap();
        let frac = split.n_source() as f64 / split.n() as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
        assert_eq!(split.outcome(), ds.outcome());
    }

    #[test]
    fn zero_shift_equals_uniform() {
        let ds = screening_cohort(2_000, 2);
        let a = semi_synthetic_split(&ds, SplitMode::Uniform, 5).unwrap();
        let b = semi_synthetic_split(&ds, SplitMode::Shifted(0.0), 5).unwrap();
        assert_eq!(a.source(), b.source());
    }

    #[test]
    fn shifted_signs_follow_outcome_association() {
        let ds = screening_cohort(20_000, 3);
        let design = SplitDesign::new(&ds, SplitMode::Shifted(0.05)).unwrap();
        assert_eq!(design.coefficients(), &[0.05, -0.05, 0.05, 0.05, -0.05, 0.05, 0.05, 0.05]);
    }

    #[test]
    fn cohort_outcome_rate() {
        let ds = screening_cohort(20_000, 4);
        let rate = ds.outcome().iter().map(|y| y.unwrap()).sum::<f64>() / 20_000.0;
        assert!(rate > 0.2 && rate < 0.4, "{rate}");
    }

    #[test]
    fn split_eval_is_deterministic() {
        let ds = screening_cohort(1_500, 5);
        let cfg = SplitEvalConfig {
            mode: SplitMode::Shifted(0.05),
            splits: 3,
            seed: 8,
            boot_replicates: 20,
            ..SplitEvalConfig::default()
        };
        let a = run_split_eval(&ds, &cfg).unwrap();
        let b = run_split_eval(&ds, &cfg).unwrap();
        assert_eq!(a.splits, b.splits);
        let rows = summarize_split_eval(&a);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4].bias, 0.0);
        assert!(rows[..4].iter().all(|r| r.avg_boot_se.unwrap() > 0.0));
    }
}
