//! Flat `key=value` report for single-dataset estimates.
//!
//! Lines look like `estimate.dr=0.2595`; floats are written in shortest
//! round-trip form so a parsed report compares bit-exactly with the
//! in-memory one.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::Method;

pub const REPORT_SCHEMA: &str = "covshift-report/1";

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub method: Method,
    pub estimate: f64,
    pub std_error: Option<f64>,
    /// `bootstrap` or `sandwich` when a standard error is present.
    pub se_source: Option<String>,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportDocument {
    /// Resolved run configuration, echoed as `config.<key>`.
    pub config: Vec<(String, String)>,
    pub n0: usize,
    pub n1: usize,
    /// Nuisance description and diagnostics, echoed as `nuisance.<key>`.
    pub nuisance: Vec<(String, String)>,
    pub results: Vec<EstimateReport>,
    pub warnings: Vec<String>,
}

fn check_key(key: &str) -> Result<()> {
    if key.is_empty() || key.contains(['=', '\n']) {
        return Err(Error::InvalidArgument(format!("bad report key `{key}`")));
    }
    Ok(())
}

fn check_value(value: &str) -> Result<()> {
    if value.contains('\n') {
        return Err(Error::InvalidArgument("report values must be single-line".into()));
    }
    Ok(())
}

impl EstimateReport {
    fn validate(&self) -> Result<()> {
        if !self.estimate.is_finite() {
            return Err(Error::Parse(format!("{}: non-finite estimate", self.method)));
        }
        if let Some(se) = self.std_error {
            if !(se >= 0.0 && se.is_finite()) {
                return Err(Error::Parse(format!("{}: bad standard error {se}", self.method)));
            }
        }
        if let Some((lo, hi)) = self.ci {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Parse(format!("{}: bad interval [{lo}, {hi}]", self.method)));
            }
        }
        Ok(())
    }
}

impl ReportDocument {
    pub fn result(&self, method: Method) -> Option<&EstimateReport> {
        self.results.iter().find(|r| r.method == method)
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "schema={REPORT_SCHEMA}").unwrap();
        for (k, v) in &self.config {
            check_key(k)?;
            check_value(v)?;
            writeln!(out, "config.{k}={v}").unwrap();
        }
        writeln!(out, "n0={}", self.n0).unwrap();
        writeln!(out, "n1={}", self.n1).unwrap();
        for (k, v) in &self.nuisance {
            check_key(k)?;
            check_value(v)?;
            writeln!(out, "nuisance.{k}={v}").unwrap();
        }
        for r in &self.results {
            r.validate()?;
            let m = r.method.label();
            writeln!(out, "estimate.{m}={:?}", r.estimate).unwrap();
            if let Some(se) = r.std_error {
                writeln!(out, "std_error.{m}={se:?}").unwrap();
            }
            if let Some(src) = &r.se_source {
                check_value(src)?;
                writeln!(out, "se_source.{m}={src}").unwrap();
            }
            if let Some((lo, hi)) = r.ci {
                writeln!(out, "ci_lower.{m}={lo:?}").unwrap();
                writeln!(out, "ci_upper.{m}={hi:?}").unwrap();
            }
        }
        for w in &self.warnings {
            check_value(w)?;
            writeln!(out, "warning={w}").unwrap();
        }
        Ok(out)
    }

    /// Parses and re-validates a report written by [`ReportDocument::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(l) if l == format!("schema={REPORT_SCHEMA}") => {}
            Some(l) => return Err(Error::Parse(format!("unsupported report header `{l}`"))),
            None => return Err(Error::Parse("empty report".into())),
        }
        let mut doc = ReportDocument::default();
        let mut n0 = None;
        let mut n1 = None;
        // per-method partial records, kept in first-seen order
        let mut partial: Vec<(Method, Option<f64>, Option<f64>, Option<String>, Option<f64>, Option<f64>)> = Vec::new();

        let float = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{v}`")));
        for line in lines {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{line}`")))?;
            if let Some(k) = key.strip_prefix("config.") {
                doc.config.push((k.to_string(), value.to_string()));
                continue;
            }
            if let Some(k) = key.strip_prefix("nuisance.") {
                doc.nuisance.push((k.to_string(), value.to_string()));
                continue;
            }
            match key {
                "n0" => n0 = Some(value.parse().map_err(|_| Error::Parse(format!("bad n0 `{value}`")))?),
                "n1" => n1 = Some(value.parse().map_err(|_| Error::Parse(format!("bad n1 `{value}`")))?),
                "warning" => doc.warnings.push(value.to_string()),
                _ => {
                    let (field, m) = key
                        .split_once('.')
                        .ok_or_else(|| Error::Parse(format!("unknown report key `{key}`")))?;
                    let method = Method::from_str(m).map_err(|_| Error::Parse(format!("unknown method `{m}`")))?;
                    let idx = match partial.iter().position(|p| p.0 == method) {
                        Some(i) => i,
                        None => {
                            partial.push((method, None, None, None, None, None));
                            partial.len() - 1
                        }
                    };
                    let rec = &mut partial[idx];
                    match field {
                        "estimate" => rec.1 = Some(float(value)?),
                        "std_error" => rec.2 = Some(float(value)?),
                        "se_source" => rec.3 = Some(value.to_string()),
                        "ci_lower" => rec.4 = Some(float(value)?),
                        "ci_upper" => rec.5 = Some(float(value)?),
                        _ => return Err(Error::Parse(format!("unknown report key `{key}`"))),
                    }
                }
            }
        }
        doc.n0 = n0.ok_or_else(|| Error::Parse("missing n0".into()))?;
        doc.n1 = n1.ok_or_else(|| Error::Parse("missing n1".into()))?;
        for (method, est, se, src, lo, hi) in partial {
            let ci = match (lo, hi) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                (None, None) => None,
                _ => return Err(Error::Parse(format!("{method}: interval needs both endpoints"))),
            };
            let r = EstimateReport {
                method,
                estimate: est.ok_or_else(|| Error::Parse(format!("{method}: missing estimate")))?,
                std_error: se,
                se_source: src,
                ci,
            };
            r.validate()?;
            doc.results.push(r);
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReportDocument {
        ReportDocument {
            config: vec![("loss".into(), "brier".into()), ("seed".into(), "7".into())],
            n0: 189,
            n1: 1000,
            nuisance: vec![("p_map".into(), "linear".into()), ("truncation_count".into(), "0".into())],
            results: vec![
                EstimateReport {
                    method: Method::DoublyRobust,
                    estimate: 0.1 + 0.2,
                    std_error: Some(0.012345678901234567),
                    se_source: Some("bootstrap".into()),
                    ci: Some((0.27, 0.33)),
                },
                EstimateReport {
                    method: Method::Naive,
                    estimate: 0.25,
                    std_error: None,
                    se_source: None,
                    ci: None,
                },
            ],
            warnings: vec!["stratum 3 has a single cluster".into()],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let doc = sample();
        let text = doc.to_text().unwrap();
        assert!(text.starts_with("schema=covshift-report/1\n"));
        assert_eq!(ReportDocument::parse(&text).unwrap(), doc);
    }

    #[test]
    fn missing_se_is_absent_not_zero() {
        let text = sample().to_text().unwrap();
        assert!(!text.contains("std_error.naive"));
        let doc = ReportDocument::parse(&text).unwrap();
        assert_eq!(doc.result(Method::Naive).unwrap().std_error, None);
    }

    #[test]
    fn rejects_wrong_schema_and_bad_interval() {
        assert!(ReportDocument::parse("schema=other/9\nn0=1\nn1=1\n").is_err());
        let bad = "schema=covshift-report/1\nn0=1\nn1=1\nestimate.cl=0.2\nci_lower.cl=0.3\nci_upper.cl=0.1\n";
        assert!(ReportDocument::parse(bad).is_err());
        let half = "schema=covshift-report/1\nn0=1\nn1=1\nestimate.cl=0.2\nci_lower.cl=0.1\n";
        assert!(ReportDocument::parse(half).is_err());
    }

    #[test]
    fn multiline_values_refused() {
        let mut doc = sample();
        doc.config.push(("data".into(), "a\nb".into()));
        assert!(doc.to_text().is_err());
    }
}
