use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{check_epsilon, truncate_probs, ConditionalLossModel, FeatureMap, FitDiagnostics, HStrategy, PropensityModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceConfig {
    pub p_map: FeatureMap,
    pub h_map: FeatureMap,
    pub h_strategy: HStrategy,
    /// Number of cross-fitting folds; 1 disables sample splitting.
    pub folds: usize,
    pub epsilon: f64,
    pub survey_weighted: bool,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            p_map: FeatureMap::Linear,
            h_map: FeatureMap::Linear,
            h_strategy: HStrategy::Binary,
            folds: 1,
            epsilon: super::DEFAULT_EPSILON,
            survey_weighted: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NuisanceEstimates {
    pub p_hat: Vec<f64>,
    pub h_hat: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub truncation_count: usize,
    pub diagnostics: Vec<FitDiagnostics>,
}

/// Seeded fold labels, stratified on `D` so each fold gets both kinds of rows.
pub fn stratified_folds(data: &Dataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds == 0 {
        return Err(Error::InvalidArgument("fold count must be at least 1".into()));
    }
    let mut fold_of = vec![0; data.n()];
    if folds == 1 {
        return Ok(fold_of);
    }
    let mut rng = rng::stream(seed, 0, Purpose::CrossFit);
    for mut group in [data.source_rows(), data.target_rows()] {
        group.shuffle(&mut rng);
        for (pos, i) in group.into_iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    Ok(fold_of)
}

/// Fits `p` and `h` with out-of-fold prediction. `predictions` is `g` for
/// every row. With one fold both are fitted and evaluated on all rows.
pub fn cross_fit(data: &Dataset, predictions: &[f64], loss: Loss, cfg: &NuisanceConfig, seed: u64) -> Result<NuisanceEstimates> {
    if cfg.folds > 1 && cfg.folds > data.n_source().min(data.n_target()) {
        let missing = if data.n_source() < data.n_target() { 1 } else { 0 };
        return Err(Error::FoldDegenerate {
            fold: data.n_source().min(data.n_target()),
            missing,
        });
    }
    let fold_of = stratified_folds(data, cfg.folds, seed)?;
    cross_fit_with_folds(data, predictions, loss, cfg, fold_of)
}

/// [`cross_fit`] with caller-supplied fold labels `0..K`.
pub fn cross_fit_with_folds(
    data: &Dataset,
    predictions: &[f64],
    loss: Loss,
    cfg: &NuisanceConfig,
    fold_of: Vec<usize>,
) -> Result<NuisanceEstimates> {
    check_epsilon(cfg.epsilon)?;
    if fold_of.len() != data.n() || predictions.len() != data.n() {
        return Err(Error::InvalidArgument("fold labels and predictions must have one entry per row".into()));
    }
    let k = fold_of.iter().max().map_or(1, |m| m + 1);
    let all: Vec<usize> = (0..data.n()).collect();

    let per_fold = (0..k)
        .into_par_iter()
        .map(|fold| {
            let held: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] == fold).collect();
            let train: Vec<usize> = if k == 1 {
                all.clone()
            } else {
                all.iter().copied().filter(|&i| fold_of[i] != fold).collect()
            };
            for (rows, _) in [(&held, "held-out"), (&train, "training")] {
                let n1 = rows.iter().filter(|&&i| data.is_source(i)).count();
                if n1 == 0 {
                    return Err(Error::FoldDegenerate { fold, missing: 1 });
                }
                if n1 == rows.len() {
                    return Err(Error::FoldDegenerate { fold, missing: 0 });
                }
            }
            let p_model = PropensityModel::fit(data, &train, &cfg.p_map, cfg.survey_weighted)?;
            let h_model = ConditionalLossModel::fit(data, &train, predictions, loss, &cfg.h_map, cfg.h_strategy)?;
            let p = p_model.predict(data, &held)?;
            let h = h_model.predict(data, &held, predictions)?;
            Ok((held, p, h, [p_model.diagnostics().clone(), h_model.diagnostics().clone()]))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut p_hat = vec![0.0; data.n()];
    let mut h_hat = vec![0.0; data.n()];
    let mut diagnostics = Vec::with_capacity(2 * k);
    for (held, p, h, diag) in per_fold {
        for ((i, pv), hv) in held.into_iter().zip(p).zip(h) {
            p_hat[i] = pv;
            h_hat[i] = hv;
        }
        diagnostics.extend(diag);
    }
    let truncation_count = truncate_probs(&mut p_hat, cfg.epsilon);
    Ok(NuisanceEstimates {
        p_hat,
        h_hat,
        fold_of,
        truncation_count,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{expit, fit_h, fit_p};
    use rand::{Rng, SeedableRng};

    fn data(seed: u64, n: usize) -> (Dataset, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut d = Vec::new();
        let mut y = Vec::new();
        let mut g = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen_range(-1.5..1.5);
            x.push(a);
            d.push(rng.gen::<f64>() < expit(0.2 + 0.8 * a));
            y.push(Some(if rng.gen::<f64>() < expit(a) { 1.0 } else { 0.0 }));
            g.push(expit(0.5 * a));
        }
        (Dataset::new(vec!["a".into()], x, d, y).unwrap(), g)
    }

    #[test]
    fn single_fold_equals_unsplit_fit() {
        let (ds, g) = data(1, 300);
        let cfg = NuisanceConfig::default();
        let cf = cross_fit(&ds, &g, Loss::Squared, &cfg, 9).unwrap();
        let p = fit_p(&ds, &cfg.p_map, false, cfg.epsilon).unwrap();
        let (h, _) = fit_h(&ds, &g, Loss::Squared, &cfg.h_map, cfg.h_strategy).unwrap();
        assert_eq!(cf.p_hat, p.p_hat);
        assert_eq!(cf.h_hat, h);
        assert!(cf.fold_of.iter().all(|&f| f == 0));
    }

    #[test]
    fn duplicated_folds_reproduce_unsplit_fit() {
        let (ds, g) = data(2, 150);
        let n = ds.n();
        let rows: Vec<usize> = (0..n).chain(0..n).collect();
        let doubled = ds.take_rows(&rows);
        let g2: Vec<f64> = rows.iter().map(|&i| g[i]).collect();
        let folds: Vec<usize> = (0..2 * n).map(|i| i / n).collect();
        let cfg = NuisanceConfig::default();
        let cf = cross_fit_with_folds(&doubled, &g2, Loss::Squared, &cfg, folds).unwrap();
        let p = fit_p(&ds, &cfg.p_map, false, cfg.epsilon).unwrap();
        let (h, _) = fit_h(&ds, &g, Loss::Squared, &cfg.h_map, cfg.h_strategy).unwrap();
        for i in 0..2 * n {
            assert!((cf.p_hat[i] - p.p_hat[i % n]).abs() < 1e-12);
            assert!((cf.h_hat[i] - h[i % n]).abs() < 1e-12);
        }
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let (ds, _) = data(3, 101);
        let a = stratified_folds(&ds, 4, 11).unwrap();
        assert_eq!(a, stratified_folds(&ds, 4, 11).unwrap());
        assert_ne!(a, stratified_folds(&ds, 4, 12).unwrap());
        for f in 0..4 {
            assert!((0..ds.n()).any(|i| a[i] == f && ds.is_source(i)));
            assert!((0..ds.n()).any(|i| a[i] == f && !ds.is_source(i)));
        }
    }

    #[test]
    fn too_many_folds_is_degenerate() {
        let (ds, g) = data(4, 20);
        let cfg = NuisanceConfig {
            folds: ds.n_target() + 1,
            ..NuisanceConfig::default()
        };
        assert!(matches!(cross_fit(&ds, &g, Loss::Squared, &cfg, 0), Err(Error::FoldDegenerate { .. })));
    }

    #[test]
    fn out_of_fold_predictions_differ_from_in_sample() {
        let (ds, g) = data(5, 400);
        let cfg = NuisanceConfig {
            folds: 5,
            ..NuisanceConfig::default()
        };
        let cf = cross_fit(&ds, &g, Loss::Squared, &cfg, 1).unwrap();
        let one = cross_fit(&ds, &g, Loss::Squared, &NuisanceConfig::default(), 1).unwrap();
        assert_eq!(cf.diagnostics.len(), 10);
        let max_diff = cf.p_hat.iter().zip(&one.p_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_diff > 0.0 && max_diff < 0.1);
    }
}
