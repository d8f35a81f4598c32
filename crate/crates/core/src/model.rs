//! The prediction model under evaluation. It is fit elsewhere and only ever
//! evaluated here.

use std::fmt;
use std::sync::Arc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::design::Design;
use crate::nuisance::logistic::{expit, fit_logistic_irls, IrlsOptions};

/// Deterministic map from the model's input sub-vector to a prediction.
pub trait Predictor: Send + Sync {
    fn predict(&self, inputs: &[f64]) -> f64;
}

impl<F> Predictor for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, inputs: &[f64]) -> f64 {
        self(inputs)
    }
}

/// Main-effects logistic model: `expit(intercept + coefficients . x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl Predictor for LogisticModel {
    fn predict(&self, inputs: &[f64]) -> f64 {
        let eta = self.intercept
            + self
                .coefficients
                .iter()
                .zip(inputs)
                .map(|(b, x)| b * x)
                .sum::<f64>();
        expit(eta)
    }
}

#[derive(Clone)]
pub struct PredictionModel {
    columns: Vec<String>,
    predictor: Arc<dyn Predictor>,
}

impl fmt::Debug for PredictionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredictionModel")
            .field("columns", &self.columns)
            .finish_non_exhaustive()
    }
}

impl PredictionModel {
    pub fn new(columns: Vec<String>, predictor: impl Predictor + 'static) -> Self {
        Self {
            columns,
            predictor: Arc::new(predictor),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(Vec::new(), move |_: &[f64]| value)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn predict(&self, inputs: &[f64]) -> f64 {
        self.predictor.predict(inputs)
    }

    /// Predictions for every row of `data`, in row order.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .map(|c| {
                data.column_index(c)
                    .ok_or_else(|| Error::Schema(format!("model input column `{c}` not in dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut buf = vec![0.0; idx.len()];
        Ok((0..data.n())
            .map(|i| {
                let row = data.row(i);
                for (b, &j) in buf.iter_mut().zip(&idx) {
                    *b = row[j];
                }
                self.predict(&buf)
            })
            .collect())
    }
}

/// Unpenalized main-effects logistic regression of the 0/1 outcome on
/// `columns`, fitted on `rows` of `data`.
pub fn fit_main_effects(data: &Dataset, rows: &[usize], columns: &[String]) -> Result<LogisticModelFile> {
    let idx = columns
        .iter()
        .map(|c| {
            data.column_index(c)
                .ok_or_else(|| Error::Schema(format!("column `{c}` not in dataset")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut x = Vec::with_capacity(rows.len() * (idx.len() + 1));
    let mut y = Vec::with_capacity(rows.len());
    for &i in rows {
        match data.outcome()[i] {
            Some(v) if v == 0.0 || v == 1.0 => y.push(v),
            Some(v) => return Err(Error::InvalidArgument(format!("row {i}: outcome {v} is not 0/1"))),
            None => return Err(Error::InvalidArgument(format!("row {i}: missing outcome"))),
        }
        let row = data.row(i);
        x.push(1.0);
        x.extend(idx.iter().map(|&j| row[j]));
    }
    let design = Design::from_rows(idx.len() + 1, x)?;
    let fit = fit_logistic_irls(&design, &y, &vec![1.0; y.len()], 0.0, &IrlsOptions::default())?;
    if !fit.converged {
        log::warn!(
            "main-effects fit stopped after {} iterations (max |score| {:e})",
            fit.iterations,
            fit.max_abs_score
        );
    }
    Ok(LogisticModelFile {
        columns: columns.to_vec(),
        model: LogisticModel {
            intercept: fit.coefficients[0],
            coefficients: fit.coefficients[1..].to_vec(),
        },
    })
}

pub const MODEL_SCHEMA: &str = "covshift-model/1";
pub const INTERCEPT_NAME: &str = "(Intercept)";

/// A logistic model together with the names of its input columns, as
/// written to and read from model files.
///
/// File layout, one entry per line:
///
/// ```text
/// schema=covshift-model/1
/// map=linear
/// link=logit
/// (Intercept)=-0.14
/// age=0.26
/// ```
///
/// Values are written in shortest round-trip form, so save/load is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModelFile {
    pub columns: Vec<String>,
    pub model: LogisticModel,
}

impl LogisticModelFile {
    pub fn to_prediction_model(&self) -> PredictionModel {
        PredictionModel::new(self.columns.clone(), self.model.clone())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("schema={MODEL_SCHEMA}\nmap=linear\nlink=logit\n");
        s.push_str(&format!("{INTERCEPT_NAME}={:?}\n", self.model.intercept));
        for (c, b) in self.columns.iter().zip(&self.model.coefficients) {
            s.push_str(&format!("{c}={b:?}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut schema = None;
        let mut map = None;
        let mut intercept = None;
        let mut columns = Vec::new();
        let mut coefficients = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .rsplit_once('=')
                .ok_or_else(|| Error::Parse(format!("model file line {}: expected key=value", lineno + 1)))?;
            match key {
                "schema" => schema = Some(value.to_string()),
                "map" => map = Some(value.to_string()),
                "link" if value == "logit" => {}
                "link" => return Err(Error::Parse(format!("unsupported link `{value}`"))),
                _ => {
                    let b: f64 = value.parse().map_err(|_| {
                        Error::Parse(format!("model file line {}: bad coefficient `{value}`", lineno + 1))
                    })?;
                    if key == INTERCEPT_NAME {
                        intercept = Some(b);
                    } else {
                        columns.push(key.to_string());
                        coefficients.push(b);
                    }
                }
            }
        }
        if schema.as_deref() != Some(MODEL_SCHEMA) {
            return Err(Error::Parse(format!(
                "model file schema is {schema:?}, expected {MODEL_SCHEMA}"
            )));
        }
        if map.as_deref() != Some("linear") {
            return Err(Error::Parse(format!("unsupported model feature map {map:?}")));
        }
        let intercept = intercept.ok_or_else(|| Error::Parse("model file has no intercept".into()))?;
        Ok(Self {
            columns,
            model: LogisticModel {
                intercept,
                coefficients,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_rows() -> Dataset {
        Dataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.2, 9.0, 0.1, 1.0, 9.0, -0.5, -2.0, 9.0, 0.75],
            vec![true, true, false],
            vec![Some(0.0), Some(1.0), None],
        )
        .unwrap()
    }

    #[test]
    fn constant_predictor() {
        let g = PredictionModel::constant(0.3).predict_dataset(&three_rows()).unwrap();
        assert_eq!(g, vec![0.3; 3]);
    }

    #[test]
    fn identity_predictor_on_one_column() {
        let m = PredictionModel::new(vec!["c".into()], |x: &[f64]| x[0]);
        assert_eq!(m.predict_dataset(&three_rows()).unwrap(), vec![0.1, -0.5, 0.75]);
    }

    #[test]
    fn logistic_predictor_matches_hand_values() {
        // expit(0.5 - a + 2c), evaluated at 50 digits.
        let m = LogisticModelFile {
            columns: vec!["a".into(), "c".into()],
            model: LogisticModel {
                intercept: 0.5,
                coefficients: vec![-1.0, 2.0],
            },
        }
        .to_prediction_model();
        let g = m.predict_dataset(&three_rows()).unwrap();
        let expected = [0.622_459_331_201_854_6, 0.182_425_523_806_356_3, 0.982_013_790_037_908_4];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let m = PredictionModel::new(vec!["zz".into()], |x: &[f64]| x[0]);
        match m.predict_dataset(&three_rows()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("zz")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let file = LogisticModelFile {
            columns: vec!["a".into(), "weird=name".into()],
            model: LogisticModel {
                intercept: -0.1401464408481048,
                coefficients: vec![1.0 / 3.0, -2.5e-17],
            },
        };
        let back = LogisticModelFile::parse(&file.to_text()).unwrap();
        assert_eq!(back, file);
        let x = [0.7, 1.9];
        assert_eq!(
            back.to_prediction_model().predict(&x).to_bits(),
            file.to_prediction_model().predict(&x).to_bits()
        );
    }

    #[test]
    fn model_file_rejects_wrong_schema() {
        assert!(LogisticModelFile::parse("schema=other\nmap=linear\n(Intercept)=0\n").is_err());
    }
}
