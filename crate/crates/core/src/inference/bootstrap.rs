//! Nonparametric bootstrap: i.i.d. row resampling, or a design-consistent
//! scheme that resamples target clusters within strata and source rows
//! independently (the two samples are drawn separately).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleUnit {
    Row,
    /// Target clusters within strata; source rows individually.
    Cluster,
}

impl FromStr for ResampleUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "row" => Ok(ResampleUnit::Row),
            "cluster" => Ok(ResampleUnit::Cluster),
            other => Err(Error::InvalidArgument(format!("unknown resample unit `{other}`"))),
        }
    }
}

impl fmt::Display for ResampleUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleUnit::Row => "row",
            ResampleUnit::Cluster => "cluster",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    /// Empirical 2.5% and 97.5% order statistics.
    Percentile,
    /// Point estimate plus or minus 1.96 standard errors.
    Normal,
}

impl FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "percentile" => Ok(CiMethod::Percentile),
            "normal" => Ok(CiMethod::Normal),
            other => Err(Error::InvalidArgument(format!("unknown CI method `{other}`"))),
        }
    }
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiMethod::Percentile => "percentile",
            CiMethod::Normal => "normal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub unit: ResampleUnit,
    pub seed: u64,
    pub ci_method: CiMethod,
}

impl BootstrapPlan {
    pub fn rows(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            unit: ResampleUnit::Row,
            seed,
            ci_method: CiMethod::Percentile,
        }
    }
}

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    /// Estimates of the successful replicates, in replicate order.
    pub estimates: Vec<f64>,
    /// `(replicate index, error message)` for skipped replicates.
    pub failures: Vec<(usize, String)>,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub warnings: Vec<String>,
}

/// Precomputed resampling structure for one dataset.
#[derive(Debug, Clone)]
pub struct Resampler {
    unit: ResampleUnit,
    n: usize,
    source_rows: Vec<usize>,
    // stratum -> clusters -> (label, rows)
    strata: Vec<Vec<(String, Vec<usize>)>>,
    warnings: Vec<String>,
}

impl Resampler {
    pub fn new(data: &Dataset, unit: ResampleUnit) -> Result<Self> {
        let mut strata = Vec::new();
        let mut warnings = Vec::new();
        if unit == ResampleUnit::Cluster {
            let clusters = data
                .clusters()
                .ok_or_else(|| Error::InvalidArgument("cluster resampling needs a cluster column".into()))?;
            let mut grouped: BTreeMap<Option<String>, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
            for i in data.target_rows() {
                let label = clusters[i]
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument(format!("target row {i} has no cluster label")))?;
                let stratum = data.strata().and_then(|s| s[i].clone());
                grouped.entry(stratum).or_default().entry(label).or_default().push(i);
            }
            for (stratum, clusters) in grouped {
                if clusters.len() == 1 {
                    let msg = format!(
                        "stratum {} has a single cluster; it is drawn in every replicate",
                        stratum.as_deref().unwrap_or("<none>")
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                strata.push(clusters.into_iter().collect());
            }
        }
        Ok(Self {
            unit,
            n: data.n(),
            source_rows: data.source_rows(),
            strata,
            warnings,
        })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Row indices of one resample plus, in cluster mode, fresh cluster
    /// labels for the drawn rows (repeated clusters get distinct labels).
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (Vec<usize>, Option<Vec<Option<String>>>) {
        match self.unit {
            ResampleUnit::Row => ((0..self.n).map(|_| rng.gen_range(0..self.n)).collect(), None),
            ResampleUnit::Cluster => {
                let mut rows = Vec::with_capacity(self.n);
                let mut labels = Vec::with_capacity(self.n);
                for clusters in &self.strata {
                    let m = clusters.len();
                    for k in 0..m {
                        let (label, members) = &clusters[rng.gen_range(0..m)];
                        let fresh = format!("{label}#{k}");
                        for &i in members {
                            rows.push(i);
                            labels.push(Some(fresh.clone()));
                        }
                    }
                }
                let n1 = self.source_rows.len();
                for _ in 0..n1 {
                    rows.push(self.source_rows[rng.gen_range(0..n1)]);
                    labels.push(None);
                }
                (rows, Some(labels))
            }
        }
    }

    pub fn resample(&self, data: &Dataset, replicate: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
        let mut rng = rng::stream(seed, replicate as u64, Purpose::Bootstrap);
        let (rows, labels) = self.draw(&mut rng);
        let mut ds = data.take_rows(&rows);
        if let Some(labels) = labels {
            ds = ds.with_clusters(labels)?;
        }
        Ok((ds, rows))
    }
}

pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    // shifted by the first value so constant input gives exactly zero
    let shift = values[0];
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    let ss = values.iter().map(|v| (v - shift - mean).powi(2)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

/// `ceil(q * n)`-th order statistic (1-based) of sorted values.
fn order_stat(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Runs `builder` on `plan.replicates` resamples of `data`.
///
/// The builder receives the resampled dataset and, for each of its rows, the
/// index of the original row it copies, so it can carry per-row side data
/// (predictions, fixed nuisances) along. Replicate `b` always uses the same
/// random stream, so results do not depend on thread scheduling.
pub fn bootstrap<F>(data: &Dataset, point_estimate: f64, plan: &BootstrapPlan, builder: F) -> Result<BootstrapOutcome>
where
    F: Fn(&Dataset, &[usize]) -> Result<f64> + Sync,
{
    let mut out = bootstrap_many(data, &[point_estimate], plan, |ds, rows| builder(ds, rows).map(|v| vec![v]))?;
    Ok(out.remove(0))
}

/// [`bootstrap`] for a builder returning several statistics per replicate
/// (one per entry of `point_estimates`). A replicate fails as a whole.
pub fn bootstrap_many<F>(
    data: &Dataset,
    point_estimates: &[f64],
    plan: &BootstrapPlan,
    builder: F,
) -> Result<Vec<BootstrapOutcome>>
where
    F: Fn(&Dataset, &[usize]) -> Result<Vec<f64>> + Sync,
{
    if plan.replicates < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
    }
    let k = point_estimates.len();
    let resampler = Resampler::new(data, plan.unit)?;
    let results: Vec<Result<Vec<f64>>> = (0..plan.replicates)
        .into_par_iter()
        .map(|b| {
            let (ds, rows) = resampler.resample(data, b, plan.seed)?;
            let est = builder(&ds, &rows)?;
            if est.len() != k {
                return Err(Error::InvalidArgument(format!("builder returned {} statistics, expected {k}", est.len())));
            }
            match est.iter().find(|v| !v.is_finite()) {
                Some(v) => Err(Error::InvalidArgument(format!("non-finite estimate {v}"))),
                None => Ok(est),
            }
        })
        .collect();

    let mut estimates = vec![Vec::with_capacity(plan.replicates); k];
    let mut failures = Vec::new();
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => {
                for (col, x) in estimates.iter_mut().zip(v) {
                    col.push(x);
                }
            }
            Err(e) => failures.push((b, e.to_string())),
        }
    }
    let succeeded = plan.replicates - failures.len();
    if failures.len() as f64 > MAX_FAILURE_FRACTION * plan.replicates as f64 || succeeded < 2 {
        return Err(Error::ExcessFailures {
            failed: failures.len(),
            total: plan.replicates,
            limit_pct: 100.0 * MAX_FAILURE_FRACTION,
            first: failures.first().map(|f| format!("replicate {}: {}", f.0, f.1)).unwrap_or_default(),
        });
    }

    Ok(estimates
        .into_iter()
        .zip(point_estimates)
        .map(|(estimates, &point)| {
            let se = sample_sd(&estimates);
            let (ci_lower, ci_upper) = match plan.ci_method {
                CiMethod::Normal => (point - Z_975 * se, point + Z_975 * se),
                CiMethod::Percentile => {
                    let mut sorted = estimates.clone();
                    sorted.sort_by(f64::total_cmp);
                    (order_stat(&sorted, 0.025), order_stat(&sorted, 0.975))
                }
            };
            BootstrapOutcome {
                estimates,
                failures: failures.clone(),
                se,
                ci_lower,
                ci_upper,
                warnings: resampler.warnings.clone(),
            }
        })
        .collect())
}
