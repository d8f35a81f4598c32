//! Fit the nuisances for one dataset and compute the requested estimators.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorInput, Method};
use crate::loss::{row_losses, Loss};
use crate::nuisance::{cross_fit, NuisanceConfig, NuisanceEstimates};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub loss: Loss,
    pub nuisance: NuisanceConfig,
    pub methods: Vec<Method>,
    /// Seed for cross-fitting fold assignment; unused with one fold.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// In the order of `PipelineConfig::methods`.
    pub estimates: Vec<(Method, f64)>,
    /// Present when some method needed a nuisance.
    pub nuisance: Option<NuisanceEstimates>,
    /// Estimator input with target losses hidden.
    pub input: EstimatorInput,
}

impl PipelineOutput {
    pub fn get(&self, method: Method) -> Option<f64> {
        self.estimates.iter().find(|(m, _)| *m == method).map(|(_, v)| *v)
    }
}

pub fn run_pipeline(data: &Dataset, predictions: &[f64], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let needs_nuisance = cfg.methods.iter().any(|m| m.needs_p() || m.needs_h());
    let nuisance = if needs_nuisance {
        Some(cross_fit(data, predictions, cfg.loss, &cfg.nuisance, cfg.seed)?)
    } else {
        None
    };
    let (p, h) = match &nuisance {
        Some(n) => (Some(n.p_hat.clone()), Some(n.h_hat.clone())),
        None => (None, None),
    };
    let (estimates, input) = estimates_with(data, predictions, cfg.loss, &cfg.methods, p, h)?;
    Ok(PipelineOutput {
        estimates,
        nuisance,
        input,
    })
}

/// Estimates from already-fitted nuisances. Target outcomes, when present,
/// are only ever used by the oracle.
pub fn estimates_with(
    data: &Dataset,
    predictions: &[f64],
    loss: Loss,
    methods: &[Method],
    p_hat: Option<Vec<f64>>,
    h_hat: Option<Vec<f64>>,
) -> Result<(Vec<(Method, f64)>, EstimatorInput)> {
    if predictions.len() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} rows",
            predictions.len(),
            data.n()
        )));
    }
    let all_losses = row_losses(loss, data.outcome(), predictions)?;
    let source_losses = all_losses
        .iter()
        .zip(data.source())
        .map(|(l, &s)| if s { *l } else { None })
        .collect();
    let mut input = EstimatorInput::new(data, source_losses);
    input.p_hat = p_hat;
    input.h_hat = h_hat;
    let oracle_input = methods
        .contains(&Method::Oracle)
        .then(|| EstimatorInput::new(data, all_losses));
    let estimates = methods
        .iter()
        .map(|&m| {
            let v = match (&oracle_input, m) {
                (Some(o), Method::Oracle) => estimate(m, o)?,
                _ => estimate(m, &input)?,
            };
            Ok((m, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((estimates, input))
}
