//! Replicated simulation of the Gaussian scenario with every estimator arm.
//!
//! Per replicate: draw a dataset, split the source rows into a training part
//! (fits the prediction model, a main-effects logistic regression) and a test
//! part, then estimate the target risk on test + target rows. Each arm pairs
//! an estimator with a nuisance specification: "correct" uses linear plus
//! squared terms (the true selection and outcome models are in that class),
//! "miss" uses linear terms only, "gam" an additive cubic spline.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{dgp_draw, MvnSampler, ScenarioSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_cl, estimate_dr, estimate_iw, estimate_naive, EstimatorInput};
use crate::inference::{eif_values, sample_sd, sandwich_se};
use crate::loss::{row_losses, Loss};
use crate::model::{fit_main_effects, PredictionModel, Predictor};
use crate::nuisance::{fit_h, fit_p, FeatureMap, HStrategy};
use crate::rng::{stream, Purpose};

/// Share of failed replicates above which a study is abandoned.
pub const MAX_REPLICATE_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NuisanceSpec {
    Correct,
    Misspecified,
    Additive,
}

impl NuisanceSpec {
    pub fn feature_map(self) -> FeatureMap {
        match self {
            NuisanceSpec::Correct => FeatureMap::Quadratic,
            NuisanceSpec::Misspecified => FeatureMap::Linear,
            NuisanceSpec::Additive => FeatureMap::spline(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Naive,
    WCorr,
    WMiss,
    ClCorr,
    ClMiss,
    DrCorr,
    DrMissP,
    DrMissH,
    DrMissBoth,
    DrGam,
}

impl Arm {
    pub const ALL: [Arm; 10] = [
        Arm::Naive,
        Arm::WCorr,
        Arm::WMiss,
        Arm::ClCorr,
        Arm::ClMiss,
        Arm::DrCorr,
        Arm::DrMissP,
        Arm::DrMissH,
        Arm::DrMissBoth,
        Arm::DrGam,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Naive => "naive",
            Arm::WCorr => "w-corr",
            Arm::WMiss => "w-miss",
            Arm::ClCorr => "cl-corr",
            Arm::ClMiss => "cl-miss",
            Arm::DrCorr => "dr-corr",
            Arm::DrMissP => "dr-miss-p",
            Arm::DrMissH => "dr-miss-h",
            Arm::DrMissBoth => "dr-miss-both",
            Arm::DrGam => "dr-gam",
        }
    }

    /// Nuisance specifications used for `(p, h)`.
    pub fn nuisances(self) -> (Option<NuisanceSpec>, Option<NuisanceSpec>) {
        use NuisanceSpec::*;
        match self {
            Arm::Naive => (None, None),
            Arm::WCorr => (Some(Correct), None),
            Arm::WMiss => (Some(Misspecified), None),
            Arm::ClCorr => (None, Some(Correct)),
            Arm::ClMiss => (None, Some(Misspecified)),
            Arm::DrCorr => (Some(Correct), Some(Correct)),
            Arm::DrMissP => (Some(Misspecified), Some(Correct)),
            Arm::DrMissH => (Some(Correct), Some(Misspecified)),
            Arm::DrMissBoth => (Some(Misspecified), Some(Misspecified)),
            Arm::DrGam => (Some(Additive), Some(Additive)),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Arm::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown arm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub index: usize,
    /// In the order the arms were requested.
    pub estimates: Vec<(Arm, f64)>,
    /// Influence-function standard error of the correctly specified DR arm.
    pub dr_corr_se: Option<f64>,
    /// Target risk of this replicate's fitted model.
    pub truth: f64,
    /// Test + target rows the estimators used.
    pub n_eval: usize,
    pub n_target: usize,
    pub truncation_count: usize,
}

impl ReplicateResult {
    pub fn get(&self, arm: Arm) -> Option<f64> {
        self.estimates.iter().find(|(a, _)| *a == arm).map(|(_, v)| *v)
    }
}

/// Expected loss of prediction `g` for a binary outcome with `Pr[Y = 1] = q`.
fn expected_binary_loss(loss: Loss, q: f64, g: f64) -> f64 {
    let (l1, l0) = match loss {
        Loss::Squared => ((1.0 - g) * (1.0 - g), g * g),
        Loss::Absolute => ((1.0 - g).abs(), g.abs()),
    };
    q * l1 + (1.0 - q) * l0
}

/// Mean expected loss of `model` over `draws` target covariate vectors.
///
/// Target draws come from rejection sampling: a covariate vector from the
/// full population is kept with probability `1 - Pr[D = 1 | x]`. The loss is
/// averaged analytically over the outcome given `x`.
pub fn target_risk_mc<R: Rng>(
    spec: &ScenarioSpec,
    sampler: &MvnSampler,
    model: &dyn Predictor,
    draws: usize,
    rng: &mut R,
) -> f64 {
    let d = spec.dim;
    let (mut x, mut z) = (vec![0.0; d], vec![0.0; d]);
    let mut accepted = 0;
    let mut total = 0.0;
    while accepted < draws {
        sampler.draw_into(rng, &mut z, &mut x);
        if rng.gen::<f64>() < spec.selection.prob(&x) {
            continue;
        }
        accepted += 1;
        total += expected_binary_loss(spec.loss, spec.outcome.prob(&x), model.predict(&x));
    }
    total / draws as f64
}

fn h_strategy_for(spec: &ScenarioSpec) -> HStrategy {
    match spec.loss {
        Loss::Squared => HStrategy::Binary,
        Loss::Absolute => HStrategy::Direct,
    }
}

/// One replicate's full draw and its split into the rows used to fit the
/// prediction model and the rows it is evaluated on.
#[derive(Debug, Clone)]
pub struct ReplicateDraw {
    pub full: Dataset,
    /// Source rows the prediction model is fitted on.
    pub train: Vec<usize>,
    /// Remaining source rows plus every target row.
    pub eval: Vec<usize>,
}

pub fn replicate_draw(spec: &ScenarioSpec, sampler: &MvnSampler, index: usize) -> Result<ReplicateDraw> {
    let full = dgp_draw(spec, sampler, &mut stream(spec.seed, index as u64, Purpose::Data));

    let mut src = full.source_rows();
    src.shuffle(&mut stream(spec.seed, index as u64, Purpose::Split));
    let n_train = (src.len() as f64 * spec.train_fraction).round() as usize;
    if n_train == 0 || n_train == src.len() {
        return Err(Error::EmptySource);
    }
    let mut in_train = vec![false; full.n()];
    for &i in &src[..n_train] {
        in_train[i] = true;
    }
    let train = (0..full.n()).filter(|&i| in_train[i]).collect();
    let eval = (0..full.n()).filter(|&i| !in_train[i]).collect();
    Ok(ReplicateDraw { full, train, eval })
}

/// Dataset of replicate `index` restricted to the evaluation rows (source
/// test part plus all target rows), with the prediction model fitted on the
/// source training part. Outcomes are kept on every row.
pub fn replicate_eval_data(spec: &ScenarioSpec, sampler: &MvnSampler, index: usize) -> Result<(Dataset, PredictionModel)> {
    let draw = replicate_draw(spec, sampler, index)?;
    let model = fit_main_effects(&draw.full, &draw.train, &spec.names())?.to_prediction_model();
    let eval = draw.full.take_rows(&draw.eval);
    if eval.n_target() == 0 {
        return Err(Error::EmptyTarget);
    }
    Ok((eval, model))
}

/// Runs replicate `index` of the study for the requested arms.
pub fn run_replicate(spec: &ScenarioSpec, sampler: &MvnSampler, index: usize, arms: &[Arm]) -> Result<ReplicateResult> {
    let (eval, model) = replicate_eval_data(spec, sampler, index)?;
    let g = model.predict_dataset(&eval)?;
    let (estimates, dr_corr_se, truncation_count) = evaluate_arms(spec, &eval, &g, arms)?;

    let truth = target_risk_mc(
        spec,
        sampler,
        &move |x: &[f64]| model.predict(x),
        spec.truth_draws,
        &mut stream(spec.seed, index as u64, Purpose::Truth),
    );
    Ok(ReplicateResult {
        index,
        estimates,
        dr_corr_se,
        truth,
        n_eval: eval.n(),
        n_target: eval.n_target(),
        truncation_count,
    })
}

type ArmOutput = (Vec<(Arm, f64)>, Option<f64>, usize);

fn evaluate_arms(spec: &ScenarioSpec, eval: &Dataset, g: &[f64], arms: &[Arm]) -> Result<ArmOutput> {
    let strategy = h_strategy_for(spec);
    let losses: Vec<Option<f64>> = row_losses(spec.loss, eval.outcome(), g)?
        .into_iter()
        .zip(eval.source())
        .map(|(l, &s)| if s { l } else { None })
        .collect();
    let base = EstimatorInput::new(eval, losses);

    let mut p_fits = Vec::new();
    let mut h_fits = Vec::new();
    let mut truncation_count = 0;
    for arm in arms {
        let (p, h) = arm.nuisances();
        if let Some(p) = p {
            if !p_fits.iter().any(|(k, _)| *k == p) {
                let est = fit_p(eval, &p.feature_map(), false, spec.epsilon)?;
                truncation_count += est.truncation_count;
                p_fits.push((p, est.p_hat));
            }
        }
        if let Some(h) = h {
            if !h_fits.iter().any(|(k, _)| *k == h) {
                let (h_hat, _) = fit_h(eval, g, spec.loss, &h.feature_map(), strategy)?;
                h_fits.push((h, h_hat));
            }
        }
    }
    let lookup = |fits: &Vec<(NuisanceSpec, Vec<f64>)>, k: Option<NuisanceSpec>| {
        k.and_then(|k| fits.iter().find(|(s, _)| *s == k).map(|(_, v)| v.clone()))
    };

    let mut out = Vec::with_capacity(arms.len());
    let mut dr_corr_se = None;
    for &arm in arms {
        let (p, h) = arm.nuisances();
        let input = EstimatorInput {
            p_hat: lookup(&p_fits, p),
            h_hat: lookup(&h_fits, h),
            ..base.clone()
        };
        let v = match arm {
            Arm::Naive => estimate_naive(&input)?,
            Arm::WCorr | Arm::WMiss => estimate_iw(&input)?,
            Arm::ClCorr | Arm::ClMiss => estimate_cl(&input)?,
            _ => estimate_dr(&input)?,
        };
        if arm == Arm::DrCorr {
            dr_corr_se = Some(sandwich_se(&eif_values(&input, v)?)?);
        }
        out.push((arm, v));
    }
    Ok((out, dr_corr_se, truncation_count))
}

#[derive(Debug, Clone)]
pub struct StudyRun {
    pub arms: Vec<Arm>,
    /// Successful replicates in index order.
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<(usize, String)>,
    /// Average of the per-replicate truths.
    pub truth: f64,
}

/// Runs `spec.replications` replicates in parallel. Results are ordered by
/// replicate index and do not depend on scheduling.
pub fn run_study(spec: &ScenarioSpec, arms: &[Arm]) -> Result<StudyRun> {
    spec.validate()?;
    if arms.is_empty() {
        return Err(Error::InvalidArgument("no arms requested".into()));
    }
    let sampler = MvnSampler::new(&spec.covariance())?;
    let results: Vec<Result<ReplicateResult>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replicate(spec, &sampler, r, arms))
        .collect();
    let mut replicates = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => replicates.push(v),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    if failures.len() as f64 > MAX_REPLICATE_FAILURE_FRACTION * spec.replications as f64 || replicates.is_empty() {
        return Err(Error::ExcessFailures {
            failed: failures.len(),
            total: spec.replications,
            limit_pct: 100.0 * MAX_REPLICATE_FAILURE_FRACTION,
            first: failures.first().map(|f| format!("replicate {}: {}", f.0, f.1)).unwrap_or_default(),
        });
    }
    let truth = replicates.iter().map(|r| r.truth).sum::<f64>() / replicates.len() as f64;
    Ok(StudyRun {
        arms: arms.to_vec(),
        replicates,
        failures,
        truth,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: String,
    pub avg_estimate: f64,
    pub sqrt_n_bias: f64,
    pub sqrt_n_sd: f64,
    pub rel_bias_pct: f64,
    pub replicates: usize,
}

/// Average, `sqrt(n)` x bias, `sqrt(n)` x SD across replicates, and
/// relative bias `(average - truth) / truth` in percent.
pub fn summarize_estimates(arm: &str, estimates: &[f64], truth: f64, n: f64) -> Result<SummaryRow> {
    if estimates.len() < 2 {
        return Err(Error::InvalidArgument("summaries need at least 2 replicates".into()));
    }
    let avg = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let root_n = n.sqrt();
    Ok(SummaryRow {
        arm: arm.to_string(),
        avg_estimate: avg,
        sqrt_n_bias: root_n * (avg - truth),
        sqrt_n_sd: root_n * sample_sd(estimates),
        rel_bias_pct: 100.0 * (avg - truth) / truth,
        replicates: estimates.len(),
    })
}

/// One row per arm, against the study truth; `n` is the mean evaluation-set size.
pub fn summarize(run: &StudyRun) -> Result<Vec<SummaryRow>> {
    let n = run.replicates.iter().map(|r| r.n_eval as f64).sum::<f64>() / run.replicates.len() as f64;
    run.arms
        .iter()
        .map(|&arm| {
            let est: Vec<f64> = run.replicates.iter().filter_map(|r| r.get(arm)).collect();
            summarize_estimates(arm.label(), &est, run.truth, n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(reps: usize) -> ScenarioSpec {
        ScenarioSpec {
            replications: reps,
            truth_draws: 2_000,
            seed: 11,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn arm_labels_round_trip() {
        for a in Arm::ALL {
            assert_eq!(a.label().parse::<Arm>().unwrap(), a);
        }
        assert!("dr-sometimes".parse::<Arm>().is_err());
    }

    #[test]
    fn summary_of_exact_estimates() {
        let row = summarize_estimates("x", &[0.3, 0.3, 0.3], 0.3, 100.0).unwrap();
        assert_eq!((row.sqrt_n_bias, row.sqrt_n_sd, row.rel_bias_pct), (0.0, 0.0, 0.0));
        let sym = summarize_estimates("x", &[0.9 * 0.25, 1.1 * 0.25], 0.25, 100.0).unwrap();
        assert!(sym.rel_bias_pct.abs() < 1e-12);
        assert!((sym.sqrt_n_sd - 10.0 * 0.025 * 2f64.sqrt()).abs() < 1e-12);
        // the -12% of a 0.2279 average against a 0.2595 truth
        let naive = summarize_estimates("naive", &[0.2279, 0.2279], 0.2595, 1.0).unwrap();
        assert!((naive.rel_bias_pct.round() - -12.0).abs() < 1e-12);
    }

    #[test]
    fn constant_model_truth_is_affine_in_mean_outcome_prob() {
        let spec = small_spec(1);
        let sampler = MvnSampler::new(&spec.covariance()).unwrap();
        let c = 0.3;
        let risk = target_risk_mc(&spec, &sampler, &|_: &[f64]| c, 20_000, &mut stream(1, 0, Purpose::Truth));
        // same stream, so the same accepted draws
        let mean_q = target_risk_mc(&spec, &sampler, &|_: &[f64]| 0.0, 20_000, &mut stream(1, 0, Purpose::Truth));
        assert!((risk - (mean_q * (1.0 - 2.0 * c) + c * c)).abs() < 1e-12);
        // best constant is the target mean outcome probability
        let at = |c: f64| mean_q * (1.0 - 2.0 * c) + c * c;
        assert!(at(mean_q) <= at(mean_q + 0.01) && at(mean_q) <= at(mean_q - 0.01));
    }

    #[test]
    fn calibrated_model_truth() {
        let spec = small_spec(1);
        let sampler = MvnSampler::new(&spec.covariance()).unwrap();
        let outcome = spec.outcome;
        let risk = target_risk_mc(&spec, &sampler, &move |x: &[f64]| outcome.prob(x), 5_000, &mut stream(2, 0, Purpose::Truth));
        // E[q(1 - q) | D = 0] over the same accepted draws
        let mut rng = stream(2, 0, Purpose::Truth);
        let (mut x, mut z) = (vec![0.0; 10], vec![0.0; 10]);
        let (mut acc, mut total) = (0, 0.0);
        while acc < 5_000 {
            sampler.draw_into(&mut rng, &mut z, &mut x);
            if rng.gen::<f64>() < spec.selection.prob(&x) {
                continue;
            }
            let q = outcome.prob(&x);
            total += q * (1.0 - q);
            acc += 1;
        }
        assert!((risk - total / 5_000.0).abs() < 1e-12);
    }

    #[test]
    fn rejection_sampler_matches_importance_weighting() {
        let spec = small_spec(1);
        let sampler = MvnSampler::new(&spec.covariance()).unwrap();
        let mut rng = stream(3, 0, Purpose::Truth);
        let (mut x, mut z) = (vec![0.0; 10], vec![0.0; 10]);
        let (mut acc_sum, mut acc_n) = (0.0, 0usize);
        let (mut iw_num, mut iw_den, mut uncond) = (0.0, 0.0, 0.0);
        let n = 200_000;
        for _ in 0..n {
            sampler.draw_into(&mut rng, &mut z, &mut x);
            let p = spec.selection.prob(&x);
            iw_num += (1.0 - p) * x[0] * x[0];
            iw_den += 1.0 - p;
            uncond += x[0] * x[0];
            if rng.gen::<f64>() >= p {
                acc_sum += x[0] * x[0];
                acc_n += 1;
            }
        }
        let rej = acc_sum / acc_n as f64;
        let iw = iw_num / iw_den;
        let all = uncond / n as f64;
        assert!((rej - iw).abs() < 0.02, "{rej} vs {iw}");
        assert!(all - rej > 0.1, "no shift detected: {all} vs {rej}");
    }

    #[test]
    fn replicate_is_deterministic_and_sane() {
        let spec = small_spec(2);
        let sampler = MvnSampler::new(&spec.covariance()).unwrap();
        let a = run_replicate(&spec, &sampler, 0, &Arm::ALL).unwrap();
        let b = run_replicate(&spec, &sampler, 0, &Arm::ALL).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.estimates.len(), 10);
        for (arm, v) in &a.estimates {
            assert!(v.is_finite() && *v > 0.0 && *v < 1.0, "{arm}: {v}");
        }
        assert!(a.dr_corr_se.unwrap() > 0.0);
        assert!(a.n_eval > a.n_target && a.n_target > 300);
    }

    #[test]
    fn study_is_ordered_and_filterable() {
        let spec = small_spec(4);
        let run = run_study(&spec, &[Arm::Naive, Arm::DrCorr]).unwrap();
        assert_eq!(run.replicates.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let rows = summarize(&run).unwrap();
        assert_eq!(rows.iter().map(|r| r.arm.as_str()).collect::<Vec<_>>(), vec!["naive", "dr-corr"]);
        let again = summarize(&run_study(&spec, &[Arm::Naive, Arm::DrCorr]).unwrap()).unwrap();
        assert_eq!(rows, again);
    }
}
