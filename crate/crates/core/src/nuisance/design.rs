//! Feature maps turning covariates into regression design matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spline::BSplineBasis;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Ridge grid searched for additive-spline fits.
pub const DEFAULT_RIDGE_GRID: [f64; 3] = [1e-4, 1e-2, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub interior_knots: usize,
    pub degree: usize,
    /// Candidate ridge penalties. A single entry is used as is; several are
    /// chosen between by 3-fold validation loss.
    pub ridge_grid: Vec<f64>,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            interior_knots: 5,
            degree: 3,
            ridge_grid: DEFAULT_RIDGE_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureMap {
    /// Intercept and main effects.
    Linear,
    /// Intercept, main effects and squared main effects.
    Quadratic,
    /// Intercept and an additive B-spline block per covariate.
    Spline(SplineConfig),
}

impl FeatureMap {
    pub fn spline() -> Self {
        FeatureMap::Spline(SplineConfig::default())
    }

    pub fn label(&self) -> &'static str {
        match self {
            FeatureMap::Linear => "linear",
            FeatureMap::Quadratic => "quadratic",
            FeatureMap::Spline(_) => "spline",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FeatureMap::Spline(cfg) = self {
            if cfg.degree == 0 || cfg.degree > 7 {
                return Err(Error::InvalidArgument(format!("spline degree {} not in 1..=7", cfg.degree)));
            }
            if cfg.ridge_grid.is_empty() || cfg.ridge_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::InvalidArgument("spline ridge grid must be non-empty and >= 0".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(FeatureMap::Linear),
            "quadratic" | "linear+quadratic" => Ok(FeatureMap::Quadratic),
            "spline" | "additive-spline" | "gam" => Ok(FeatureMap::spline()),
            other => Err(Error::InvalidArgument(format!("unknown feature map `{other}`"))),
        }
    }
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn from_rows(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || !data.len().is_multiple_of(cols) {
            return Err(Error::InvalidArgument(format!(
                "design buffer of {} values does not split into rows of {cols}",
                data.len()
            )));
        }
        Ok(Self {
            rows: data.len() / cols,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Design {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// `X beta` for every row.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), beta)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A feature map with any data-dependent state (spline knots) resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignBasis {
    Linear,
    Quadratic,
    Spline(Vec<BSplineBasis>),
}

impl DesignBasis {
    /// Resolves `map` using the covariates of `rows` (knot placement).
    pub fn learn(map: &FeatureMap, data: &Dataset, rows: &[usize]) -> Result<Self> {
        map.validate()?;
        Ok(match map {
            FeatureMap::Linear => DesignBasis::Linear,
            FeatureMap::Quadratic => DesignBasis::Quadratic,
            FeatureMap::Spline(cfg) => DesignBasis::Spline(
                (0..data.dim())
                    .map(|j| {
                        let vals: Vec<f64> = rows.iter().map(|&i| data.row(i)[j]).collect();
                        BSplineBasis::from_training(&vals, cfg.interior_knots, cfg.degree)
                    })
                    .collect(),
            ),
        })
    }

    pub fn width(&self, dim: usize) -> usize {
        match self {
            DesignBasis::Linear => dim + 1,
            DesignBasis::Quadratic => 2 * dim + 1,
            DesignBasis::Spline(b) => 1 + b.iter().map(BSplineBasis::size).sum::<usize>(),
        }
    }

    fn write_row(&self, x: &[f64], out: &mut Vec<f64>, scratch: &mut [f64]) {
        out.push(1.0);
        match self {
            DesignBasis::Linear => out.extend_from_slice(x),
            DesignBasis::Quadratic => {
                out.extend_from_slice(x);
                out.extend(x.iter().map(|v| v * v));
            }
            DesignBasis::Spline(bases) => {
                for (b, &v) in bases.iter().zip(x) {
                    let start = out.len();
                    out.resize(start + b.size(), 0.0);
                    let first = b.eval_nonzero(v, scratch);
                    for (r, &val) in scratch[..=b.degree()].iter().enumerate() {
                        if first + r < b.size() {
                            out[start + first + r] = val;
                        }
                    }
                }
            }
        }
    }

    /// Design rows for `rows` of `data`: intercept first, then covariates in
    /// dataset order, then the squared or spline blocks.
    pub fn transform(&self, data: &Dataset, rows: &[usize]) -> Result<Design> {
        let m = self.width(data.dim());
        if let DesignBasis::Spline(b) = self {
            if b.len() != data.dim() {
                return Err(Error::Schema(format!(
                    "spline basis built for {} covariates, dataset has {}",
                    b.len(),
                    data.dim()
                )));
            }
        }
        let mut out = Vec::with_capacity(rows.len() * m);
        let mut scratch = [0.0f64; 8];
        for &i in rows {
            let x = data.row(i);
            if let Some(j) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite covariate `{}` on row {i}",
                    data.names()[j]
                )));
            }
            self.write_row(x, &mut out, &mut scratch);
        }
        Design::from_rows(m, out)
    }
}

/// Design for every row of `data`, with knots learned from all rows.
pub fn build_design(data: &Dataset, map: &FeatureMap) -> Result<Design> {
    let all: Vec<usize> = (0..data.n()).collect();
    DesignBasis::learn(map, data, &all)?.transform(data, &all)
}
