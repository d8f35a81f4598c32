//! Tabular data model: covariates, source/target membership, outcomes,
//! survey weights and optional cluster/stratum labels.
//!
//! Every row is a sampled observation. Rows with `D = 1` come from the
//! source population (the one with outcomes), rows with `D = 0` from the
//! target population whose risk is being estimated.

use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{Error, Result, Violation};

/// Which set of checks [`Dataset::validate`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Ordinary (unweighted or weighted) estimation.
    Estimate,
    /// Survey-weighted estimation: source rows must carry weight 1.
    Survey,
    /// Oracle evaluation: target rows must carry outcomes as well.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    // row-major n x d
    covariates: Vec<f64>,
    source: Vec<bool>,
    outcome: Vec<Option<f64>>,
    weight: Vec<f64>,
    cluster: Option<Vec<Option<String>>>,
    stratum: Option<Vec<Option<String>>>,
}

impl Dataset {
    /// Builds a dataset from row-major covariates. Weights default to 1.
    ///
    /// Only shapes are checked here; use [`Dataset::validate`] for the
    /// estimation invariants.
    pub fn new(
        names: Vec<String>,
        covariates: Vec<f64>,
        source: Vec<bool>,
        outcome: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = source.len();
        let d = names.len();
        if covariates.len() != n * d {
            return Err(Error::Schema(format!(
                "covariate buffer has {} values, expected {} rows x {} columns",
                covariates.len(),
                n,
                d
            )));
        }
        if outcome.len() != n {
            return Err(Error::Schema(format!(
                "outcome column has {} values, expected {}",
                outcome.len(),
                n
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate covariate column `{name}`")));
            }
        }
        Ok(Self {
            names,
            covariates,
            source,
            outcome,
            weight: vec![1.0; n],
            cluster: None,
            stratum: None,
        })
    }

    pub fn with_weights(mut self, weight: Vec<f64>) -> Result<Self> {
        self.check_len("weight", weight.len())?;
        self.weight = weight;
        Ok(self)
    }

    pub fn with_clusters(mut self, cluster: Vec<Option<String>>) -> Result<Self> {
        self.check_len("cluster", cluster.len())?;
        self.cluster = Some(cluster);
        Ok(self)
    }

    pub fn with_strata(mut self, stratum: Vec<Option<String>>) -> Result<Self> {
        self.check_len("stratum", stratum.len())?;
        self.stratum = Some(stratum);
        Ok(self)
    }

    /// Replaces the source indicator, e.g. after a synthetic split.
    pub fn with_source(mut self, source: Vec<bool>) -> Result<Self> {
        self.check_len("source indicator", source.len())?;
        self.source = source;
        Ok(self)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::Schema(format!(
                "{what} column has {len} values, expected {}",
                self.n()
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.source.len()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_source(&self) -> usize {
        self.source.iter().filter(|&&s| s).count()
    }

    pub fn n_target(&self) -> usize {
        self.n() - self.n_source()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.covariates[i * d..(i + 1) * d]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let d = self.dim();
        (0..self.n()).map(move |i| self.covariates[i * d + j])
    }

    pub fn source(&self) -> &[bool] {
        &self.source
    }

    pub fn is_source(&self, i: usize) -> bool {
        self.source[i]
    }

    pub fn outcome(&self) -> &[Option<f64>] {
        &self.outcome
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn clusters(&self) -> Option<&[Option<String>]> {
        self.cluster.as_deref()
    }

    pub fn strata(&self) -> Option<&[Option<String>]> {
        self.stratum.as_deref()
    }

    pub fn source_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.source[i]).collect()
    }

    pub fn target_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.source[i]).collect()
    }

    /// New dataset made of the given rows, in the given order (repeats allowed).
    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        let d = self.dim();
        let mut covariates = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            covariates.extend_from_slice(self.row(i));
        }
        let pick = |v: &[Option<String>]| rows.iter().map(|&i| v[i].clone()).collect();
        Dataset {
            names: self.names.clone(),
            covariates,
            source: rows.iter().map(|&i| self.source[i]).collect(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            weight: rows.iter().map(|&i| self.weight[i]).collect(),
            cluster: self.cluster.as_deref().map(pick),
            stratum: self.stratum.as_deref().map(pick),
        }
    }

    /// Checks every invariant for `mode` and returns all violations found.
    pub fn validate(&self, mode: Mode) -> Vec<Violation> {
        let mut out = Vec::new();
        let d = self.dim();
        let n1 = self.n_source();
        if n1 == 0 {
            out.push(Violation {
                row: None,
                rule: "no source rows",
                detail: "at least one row with D=1 is required".into(),
            });
        }
        if self.n() - n1 == 0 {
            out.push(Violation {
                row: None,
                rule: "no target rows",
                detail: "at least one row with D=0 is required".into(),
            });
        }
        for i in 0..self.n() {
            for (j, x) in self.row(i).iter().enumerate() {
                if !x.is_finite() {
                    out.push(Violation {
                        row: Some(i),
                        rule: "missing covariate",
                        detail: format!("column `{}` is missing or non-finite", self.names[j]),
                    });
                }
            }
            let w = self.weight[i];
            if !w.is_finite() {
                out.push(Violation {
                    row: Some(i),
                    rule: "non-finite weight",
                    detail: format!("weight {w}"),
                });
            } else if w <= 0.0 {
                out.push(Violation {
                    row: Some(i),
                    rule: "non-positive weight",
                    detail: format!("weight {w}"),
                });
            }
            match self.outcome[i] {
                Some(y) if !y.is_finite() => out.push(Violation {
                    row: Some(i),
                    rule: "non-finite outcome",
                    detail: format!("outcome {y}"),
                }),
                None if self.source[i] => out.push(Violation {
                    row: Some(i),
                    rule: "missing outcome",
                    detail: "source row (D=1) has no outcome".into(),
                }),
                None if mode == Mode::Oracle => out.push(Violation {
                    row: Some(i),
                    rule: "missing target outcome",
                    detail: "oracle mode needs outcomes on D=0 rows".into(),
                }),
                _ => {}
            }
            if mode == Mode::Survey && self.source[i] && w != 1.0 {
                out.push(Violation {
                    row: Some(i),
                    rule: "source weight not 1",
                    detail: format!("survey mode requires weight 1 on D=1 rows, found {w}"),
                });
            }
        }
        debug_assert_eq!(self.covariates.len(), self.n() * d);
        out
    }

    pub fn validated(self, mode: Mode) -> Result<Self> {
        let violations = self.validate(mode);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(violations))
        }
    }
}

/// Reserved CSV column names, matched case-insensitively.
pub const RESERVED_COLUMNS: [&str; 5] = ["D", "Y", "W", "CLUSTER", "STRATUM"];

/// Result of reading a CSV file: the dataset plus any requested side columns
/// (for example a column of precomputed predictions).
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub dataset: Dataset,
    pub extra: BTreeMap<String, Vec<f64>>,
    pub has_weights: bool,
}

/// Reads a headered CSV. Columns named in `extra_columns` are pulled out
/// as numeric side columns instead of covariates.
///
/// Empty covariate cells become NaN so that validation can report every
/// missing value with its row.
pub fn read_csv<R: Read>(reader: R, extra_columns: &[&str]) -> Result<CsvTable> {
    read_table(reader, extra_columns, true)
}

/// Reads a fully labeled CSV for split evaluation. The `D` column is
/// optional here; when absent every row is marked as source.
pub fn read_labeled_csv<R: Read>(reader: R) -> Result<Dataset> {
    Ok(read_table(reader, &[], false)?.dataset)
}

fn read_table<R: Read>(reader: R, extra_columns: &[&str], require_source: bool) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();

    enum Role {
        Source,
        Outcome,
        Weight,
        Cluster,
        Stratum,
        Extra(usize),
        Covariate,
    }
    let mut roles = Vec::with_capacity(headers.len());
    let mut names = Vec::new();
    for h in headers.iter() {
        let role = match h.to_ascii_uppercase().as_str() {
            "D" => Role::Source,
            "Y" => Role::Outcome,
            "W" => Role::Weight,
            "CLUSTER" => Role::Cluster,
            "STRATUM" => Role::Stratum,
            _ => match extra_columns.iter().position(|e| *e == h) {
                Some(k) => Role::Extra(k),
                None => {
                    names.push(h.to_string());
                    Role::Covariate
                }
            },
        };
        roles.push(role);
    }
    let has_source = roles.iter().any(|r| matches!(r, Role::Source));
    if require_source && !has_source {
        return Err(Error::Schema("CSV has no `D` column".into()));
    }
    for (k, col) in extra_columns.iter().enumerate() {
        if !roles.iter().any(|r| matches!(r, Role::Extra(j) if *j == k)) {
            return Err(Error::Schema(format!("CSV has no `{col}` column")));
        }
    }
    let has_weights = roles.iter().any(|r| matches!(r, Role::Weight));
    let has_cluster = roles.iter().any(|r| matches!(r, Role::Cluster));
    let has_stratum = roles.iter().any(|r| matches!(r, Role::Stratum));

    let mut covariates = Vec::new();
    let mut source = Vec::new();
    let mut outcome = Vec::new();
    let mut weight = Vec::new();
    let mut cluster = Vec::new();
    let mut stratum = Vec::new();
    let mut extra = vec![Vec::new(); extra_columns.len()];

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |cell: &str, col: &str| -> Result<f64> {
            cell.parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {row}, column `{col}`: `{cell}` is not a number")))
        };
        let mut y = None;
        let mut w = 1.0;
        let mut c = None;
        let mut s = None;
        for ((cell, role), header) in record.iter().zip(&roles).zip(headers.iter()) {
            match role {
                Role::Source => {
                    let v = parse(cell, header)?;
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::Parse(format!("row {row}: D must be 0 or 1, found `{cell}`")));
                    }
                    source.push(v == 1.0);
                }
                Role::Outcome => {
                    if !cell.is_empty() {
                        y = Some(parse(cell, header)?);
                    }
                }
                Role::Weight => w = parse(cell, header)?,
                Role::Cluster => c = (!cell.is_empty()).then(|| cell.to_string()),
                Role::Stratum => s = (!cell.is_empty()).then(|| cell.to_string()),
                Role::Extra(k) => extra[*k].push(parse(cell, header)?),
                Role::Covariate => covariates.push(if cell.is_empty() {
                    f64::NAN
                } else {
                    parse(cell, header)?
                }),
            }
        }
        if !has_source {
            source.push(true);
        }
        outcome.push(y);
        weight.push(w);
        cluster.push(c);
        stratum.push(s);
    }

    let mut dataset = Dataset::new(names, covariates, source, outcome)?.with_weights(weight)?;
    if has_cluster {
        dataset = dataset.with_clusters(cluster)?;
    }
    if has_stratum {
        dataset = dataset.with_strata(stratum)?;
    }
    let extra = extra_columns
        .iter()
        .map(|s| s.to_string())
        .zip(extra)
        .collect();
    Ok(CsvTable {
        dataset,
        extra,
        has_weights,
    })
}
