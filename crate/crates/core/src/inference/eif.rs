use crate::error::{Error, Result};
use crate::estimators::EstimatorInput;

/// Plug-in influence contributions of the doubly robust estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceValues {
    pub chi: Vec<f64>,
    pub psi_hat: f64,
}

/// `chi_i = (n / n0) [ I(D_i = 0)(h_i - psi) + I(D_i = 1) (1 - p_i)/p_i (L_i - h_i) ]`.
///
/// Evaluated at the doubly robust estimate the contributions average to zero.
/// Unweighted inputs only.
pub fn eif_values(input: &EstimatorInput, psi_hat: f64) -> Result<InfluenceValues> {
    if input.weights.iter().any(|&w| w != 1.0) {
        return Err(Error::InvalidArgument(
            "influence values are defined for the unweighted estimator only".into(),
        ));
    }
    let n = input.n();
    let n0 = input.n_target();
    if n0 == 0 {
        return Err(Error::EmptyTarget);
    }
    let p_hat = input.p_hat.as_ref().ok_or(Error::NuisanceMissing("p_hat"))?;
    let h_hat = input.h_hat.as_ref().ok_or(Error::NuisanceMissing("h_hat"))?;
    let scale = n as f64 / n0 as f64;
    let chi = (0..n)
        .map(|i| {
            let h = h_hat[i];
            let term = if input.source[i] {
                let p = p_hat[i];
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Positivity { row: i, value: p });
                }
                let l = input.losses[i].ok_or_else(|| Error::InvalidArgument(format!("source row {i} has no loss")))?;
                (1.0 - p) / p * (l - h)
            } else {
                h - psi_hat
            };
            Ok(scale * term)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(InfluenceValues { chi, psi_hat })
}

/// `sqrt(mean(chi^2) / n)`.
pub fn sandwich_se(iv: &InfluenceValues) -> Result<f64> {
    let n = iv.chi.len();
    if n < 2 {
        return Err(Error::InvalidArgument("sandwich standard error needs n >= 2".into()));
    }
    let mean_sq = iv.chi.iter().map(|c| c * c).sum::<f64>() / n as f64;
    Ok((mean_sq / n as f64).sqrt())
}
