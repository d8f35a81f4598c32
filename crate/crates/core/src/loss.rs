use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss between an observed outcome and a model prediction.
///
/// `Squared` applied to a binary outcome is the Brier score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[serde(alias = "brier")]
    Squared,
    Absolute,
}

impl Loss {
    pub fn evaluate(self, y: f64, yhat: f64) -> Result<f64> {
        if !y.is_finite() || !yhat.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "loss inputs must be finite (y = {y}, yhat = {yhat})"
            )));
        }
        Ok(match self {
            Loss::Squared => (y - yhat) * (y - yhat),
            Loss::Absolute => (y - yhat).abs(),
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Loss::Squared => "brier",
            Loss::Absolute => "absolute",
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "brier" | "squared" => Ok(Loss::Squared),
            "absolute" => Ok(Loss::Absolute),
            other => Err(Error::InvalidArgument(format!("unknown loss `{other}`"))),
        }
    }
}

/// Per-row losses for the rows that have an outcome; `None` elsewhere.
pub fn row_losses(loss: Loss, outcome: &[Option<f64>], predictions: &[f64]) -> Result<Vec<Option<f64>>> {
    outcome
        .iter()
        .zip(predictions)
        .map(|(y, &g)| y.map(|y| loss.evaluate(y, g)).transpose())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn squared_examples() {
        assert_eq!(Loss::Squared.evaluate(1.0, 1.0).unwrap(), 0.0);
        assert!((Loss::Squared.evaluate(1.0, 0.3).unwrap() - 0.49).abs() < 1e-15);
    }

    #[test]
    fn absolute_example() {
        assert_eq!(Loss::Absolute.evaluate(0.0, -0.25).unwrap(), 0.25);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Loss::Squared.evaluate(f64::NAN, 0.0).is_err());
        assert!(Loss::Absolute.evaluate(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn parse_labels() {
        assert_eq!("Brier".parse::<Loss>().unwrap(), Loss::Squared);
        assert_eq!("absolute".parse::<Loss>().unwrap(), Loss::Absolute);
        assert!("hinge".parse::<Loss>().is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            for loss in [Loss::Squared, Loss::Absolute] {
                let ab = loss.evaluate(a, b).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab, loss.evaluate(b, a).unwrap());
                prop_assert_eq!(loss.evaluate(a, a).unwrap(), 0.0);
            }
        }
    }
}
