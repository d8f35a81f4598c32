//! Target-population risk estimators.
//!
//! Each estimator is written once in survey-weighted form. The normalizer is
//! the total target weight `sum_i w_i I(D_i = 0)`; with unit weights it is the
//! target count `n0` and the formulas reduce to their unweighted versions.
//! Source rows enter with unit weight by construction.

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Mean loss over source rows, ignoring the shift.
    Naive,
    /// Weighted mean of `h-hat` over target rows.
    ConditionalLoss,
    /// Inverse-odds weighted source losses.
    InverseOdds,
    /// Conditional loss plus an inverse-odds weighted residual correction.
    DoublyRobust,
    /// Weighted mean loss over target rows; needs target outcomes.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Naive,
        Method::ConditionalLoss,
        Method::InverseOdds,
        Method::DoublyRobust,
        Method::Oracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::ConditionalLoss => "cl",
            Method::InverseOdds => "iw",
            Method::DoublyRobust => "dr",
            Method::Oracle => "oracle",
        }
    }

    pub fn needs_p(self) -> bool {
        matches!(self, Method::InverseOdds | Method::DoublyRobust)
    }

    pub fn needs_h(self) -> bool {
        matches!(self, Method::ConditionalLoss | Method::DoublyRobust)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

/// Everything an estimator may read. Losses are computed once by the caller
/// so all estimators see identical values.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorInput {
    pub source: Vec<bool>,
    pub weights: Vec<f64>,
    /// `L(Y_i, g(X*_i))` where the outcome is known.
    pub losses: Vec<Option<f64>>,
    pub p_hat: Option<Vec<f64>>,
    pub h_hat: Option<Vec<f64>>,
}

impl EstimatorInput {
    pub fn new(data: &Dataset, losses: Vec<Option<f64>>) -> Self {
        Self {
            source: data.source().to_vec(),
            weights: data.weights().to_vec(),
            losses,
            p_hat: None,
            h_hat: None,
        }
    }

    pub fn with_p(mut self, p_hat: Vec<f64>) -> Self {
        self.p_hat = Some(p_hat);
        self
    }

    pub fn with_h(mut self, h_hat: Vec<f64>) -> Self {
        self.h_hat = Some(h_hat);
        self
    }

    /// Same input with every weight set to 1.
    pub fn unweighted(&self) -> Self {
        Self {
            weights: vec![1.0; self.source.len()],
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.source.len()
    }

    pub fn n_source(&self) -> usize {
        self.source.iter().filter(|&&s| s).count()
    }

    pub fn n_target(&self) -> usize {
        self.n() - self.n_source()
    }

    fn target_weight(&self) -> Result<f64> {
        let total: f64 = self
            .source
            .iter()
            .zip(&self.weights)
            .filter(|(s, _)| !**s)
            .map(|(_, w)| w)
            .sum();
        if total > 0.0 {
            Ok(total)
        } else {
            Err(Error::EmptyTarget)
        }
    }

    fn source_loss(&self, i: usize) -> Result<f64> {
        match self.losses[i] {
            Some(l) if l.is_finite() => Ok(l),
            Some(l) => Err(Error::InvalidArgument(format!("non-finite loss {l} on row {i}"))),
            None => Err(Error::InvalidArgument(format!("source row {i} has no loss"))),
        }
    }

    fn odds(&self, i: usize) -> Result<f64> {
        let p = self.p_hat.as_ref().ok_or(Error::NuisanceMissing("p_hat"))?[i];
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Positivity { row: i, value: p });
        }
        Ok((1.0 - p) / p)
    }

    fn h(&self, i: usize) -> Result<f64> {
        Ok(self.h_hat.as_ref().ok_or(Error::NuisanceMissing("h_hat"))?[i])
    }

    fn check_lengths(&self) -> Result<()> {
        let n = self.n();
        let ok = self.weights.len() == n
            && self.losses.len() == n
            && self.p_hat.as_ref().is_none_or(|v| v.len() == n)
            && self.h_hat.as_ref().is_none_or(|v| v.len() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("estimator input vectors differ in length".into()))
        }
    }
}

pub fn estimate(method: Method, input: &EstimatorInput) -> Result<f64> {
    match method {
        Method::Naive => estimate_naive(input),
        Method::ConditionalLoss => estimate_cl(input),
        Method::InverseOdds => estimate_iw(input),
        Method::DoublyRobust => estimate_dr(input),
        Method::Oracle => estimate_oracle(input),
    }
}

pub fn estimate_naive(input: &EstimatorInput) -> Result<f64> {
    input.check_lengths()?;
    let mut sum = 0.0;
    let mut n1 = 0usize;
    for i in 0..input.n() {
        if input.source[i] {
            sum += input.source_loss(i)?;
            n1 += 1;
        }
    }
    if n1 == 0 {
        return Err(Error::EmptySource);
    }
    Ok(sum / n1 as f64)
}

pub fn estimate_cl(input: &EstimatorInput) -> Result<f64> {
    input.check_lengths()?;
    let norm = input.target_weight()?;
    let mut sum = 0.0;
    for i in 0..input.n() {
        if !input.source[i] {
            sum += input.weights[i] * input.h(i)?;
        }
    }
    Ok(sum / norm)
}

pub fn estimate_iw(input: &EstimatorInput) -> Result<f64> {
    input.check_lengths()?;
    let norm = input.target_weight()?;
    let mut sum = 0.0;
    for i in 0..input.n() {
        if input.source[i] {
            sum += input.odds(i)? * input.source_loss(i)?;
        }
    }
    Ok(sum / norm)
}

pub fn estimate_dr(input: &EstimatorInput) -> Result<f64> {
    input.check_lengths()?;
    let norm = input.target_weight()?;
    let mut sum = 0.0;
    for i in 0..input.n() {
        sum += if input.source[i] {
            input.odds(i)? * (input.source_loss(i)? - input.h(i)?)
        } else {
            input.weights[i] * input.h(i)?
        };
    }
    Ok(sum / norm)
}

pub fn estimate_oracle(input: &EstimatorInput) -> Result<f64> {
    input.check_lengths()?;
    let norm = input.target_weight()?;
    let mut sum = 0.0;
    for i in 0..input.n() {
        if !input.source[i] {
            let l = input.losses[i].ok_or(Error::OracleUnavailable(i))?;
            sum += input.weights[i] * l;
        }
    }
    Ok(sum / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(source: &[bool], losses: &[Option<f64>]) -> EstimatorInput {
        EstimatorInput {
            source: source.to_vec(),
            weights: vec![1.0; source.len()],
            losses: losses.to_vec(),
            p_hat: None,
            h_hat: None,
        }
    }

    #[test]
    fn naive_examples() {
        let inp = input(&[true, true, false], &[Some(0.1), Some(0.3), None]);
        assert!((estimate_naive(&inp).unwrap() - 0.2).abs() < 1e-15);
        let c = input(&[true, true, true, false], &[Some(0.4), Some(0.4), Some(0.4), None]);
        assert!((estimate_naive(&c).unwrap() - 0.4).abs() < 1e-15);
        let empty = input(&[false], &[None]);
        assert!(matches!(estimate_naive(&empty), Err(Error::EmptySource)));
    }

    #[test]
    fn cl_examples() {
        let mut inp = input(&[false, false, true], &[None, None, Some(1.0)]);
        inp.weights = vec![1.0, 3.0, 1.0];
        inp.h_hat = Some(vec![0.2, 0.6, 9.0]);
        assert!((estimate_cl(&inp).unwrap() - 0.5).abs() < 1e-15);
        inp.h_hat = Some(vec![0.7; 3]);
        assert!((estimate_cl(&inp).unwrap() - 0.7).abs() < 1e-15);
        inp.h_hat = None;
        assert!(matches!(estimate_cl(&inp), Err(Error::NuisanceMissing("h_hat"))));
    }

    #[test]
    fn iw_examples() {
        let inp = input(&[true, false], &[Some(0.4), None]).with_p(vec![0.8, 0.5]);
        assert!((estimate_iw(&inp).unwrap() - 0.1).abs() < 1e-15);

        let src = [true, true, true, false, false];
        let losses = [Some(0.2), Some(0.5), Some(0.3), None, None];
        let half = input(&src, &losses).with_p(vec![0.5; 5]);
        assert!((estimate_iw(&half).unwrap() - 1.0 / 2.0).abs() < 1e-15);

        let zero = input(&[true, false], &[Some(0.4), None]).with_p(vec![0.0, 0.5]);
        assert!(matches!(estimate_iw(&zero), Err(Error::Positivity { row: 0, .. })));
    }

    #[test]
    fn dr_hand_example() {
        let inp = input(&[false, true, true], &[None, Some(0.5), Some(0.1)])
            .with_h(vec![0.2, 0.3, 0.1])
            .with_p(vec![0.5, 0.5, 0.25]);
        assert!((estimate_dr(&inp).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn oracle_examples() {
        let one = input(&[false, true], &[Some(0.3), Some(0.9)]);
        assert!((estimate_oracle(&one).unwrap() - 0.3).abs() < 1e-15);
        let two = input(&[false, false, true], &[Some(0.0), Some(1.0), Some(0.2)]);
        assert_eq!(estimate_oracle(&two).unwrap(), 0.5);
        let missing = input(&[false, false], &[Some(0.0), None]);
        assert!(matches!(estimate_oracle(&missing), Err(Error::OracleUnavailable(1))));
    }

    #[test]
    fn method_labels_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
    }

    fn arb_input() -> impl Strategy<Value = EstimatorInput> {
        (2usize..20).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(0.1f64..10.0, n),
                proptest::collection::vec(0.0f64..2.0, n),
                proptest::collection::vec(0.01f64..0.99, n),
                proptest::collection::vec(0.0f64..1.0, n),
            )
                .prop_map(|(mut source, mut w, l, p, h)| {
                    source[0] = true;
                    source[1] = false;
                    for (s, wi) in source.iter().zip(w.iter_mut()) {
                        if *s {
                            *wi = 1.0;
                        }
                    }
                    EstimatorInput {
                        losses: l.into_iter().map(Some).collect(),
                        source,
                        weights: w,
                        p_hat: Some(p),
                        h_hat: Some(h),
                    }
                })
        })
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    proptest! {
        #[test]
        fn dr_reduces_to_iw_and_cl(inp in arb_input()) {
            let zero_h = inp.clone().with_h(vec![0.0; inp.n()]);
            prop_assert!(rel(estimate_dr(&zero_h).unwrap(), estimate_iw(&inp).unwrap()) <= 1e-12);
            let unit_p = inp.clone().with_p(vec![1.0; inp.n()]);
            prop_assert!(rel(estimate_dr(&unit_p).unwrap(), estimate_cl(&inp).unwrap()) <= 1e-12);
        }

        #[test]
        fn target_weight_scale_invariance(inp in arb_input(), c in 0.01f64..100.0) {
            let mut scaled = inp.clone();
            for (s, w) in scaled.source.iter().zip(scaled.weights.iter_mut()) {
                if !*s {
                    *w *= c;
                }
            }
            for m in [Method::ConditionalLoss, Method::Oracle] {
                prop_assert!(rel(estimate(m, &scaled).unwrap(), estimate(m, &inp).unwrap()) <= 1e-12);
            }
            // source terms carry unit weight: only the normalizer moves
            prop_assert!(rel(estimate_iw(&scaled).unwrap() * c, estimate_iw(&inp).unwrap()) <= 1e-12);
        }

        #[test]
        fn cl_within_target_h_range(inp in arb_input()) {
            let h = inp.h_hat.as_ref().unwrap();
            let target: Vec<f64> = (0..inp.n()).filter(|&i| !inp.source[i]).map(|i| h[i]).collect();
            let lo = target.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = estimate_cl(&inp).unwrap();
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
