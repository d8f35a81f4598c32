use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use covshift_core::inference::{bootstrap_many, eif_values, sandwich_se};
use covshift_core::pipeline::estimates_with;
use covshift_core::{
    read_csv, run_pipeline, BootstrapPlan, CiMethod, Dataset, Error, EstimateReport, LogisticModelFile, Loss, Method,
    Mode, PipelineConfig, ReportDocument, ResampleUnit, Violation,
};

use crate::args::{nuisance_echo, outcomes_binary, LossArg, NuisanceArgs};
use crate::failure::CliError;
use crate::output::{emit, open};

/// Two-sided 95% normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Naive,
    Cl,
    Iw,
    Dr,
    Oracle,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Row,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiArg {
    Percentile,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV with covariates and the reserved columns D, Y and optionally
    /// W, CLUSTER, STRATUM.
    #[arg(long)]
    pub data: PathBuf,

    /// Model file (as written by `model-fit`) used to compute predictions.
    #[arg(long, conflicts_with = "ghat_col")]
    pub model: Option<PathBuf>,

    /// Column of precomputed model predictions.
    #[arg(long)]
    pub ghat_col: Option<String>,

    #[arg(long, value_enum, default_value_t = LossArg::Brier)]
    pub loss: LossArg,

    /// Estimators to compute, comma separated. `all` includes the oracle
    /// only when every target row has an outcome.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    pub estimator: Vec<EstimatorArg>,

    #[command(flatten)]
    pub nuisance: NuisanceArgs,

    /// Use the W column as target survey weights. Without this flag the
    /// W column is ignored.
    #[arg(long)]
    pub survey: bool,

    /// Bootstrap replicates (0 disables the bootstrap).
    #[arg(long, default_value_t = 0)]
    pub boot: usize,

    #[arg(long, value_enum, default_value_t = UnitArg::Row)]
    pub boot_unit: UnitArg,

    #[arg(long, value_enum, default_value_t = CiArg::Percentile)]
    pub ci: CiArg,

    /// Refit the nuisance models inside every bootstrap replicate.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub boot_refit: Switch,

    /// Influence-function standard error for the doubly robust estimator
    /// (unweighted data, no bootstrap).
    #[arg(long)]
    pub sandwich: bool,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn resolve_methods(requested: &[EstimatorArg], data: &Dataset, warnings: &mut Vec<String>) -> Vec<Method> {
    let mut methods = Vec::new();
    for e in requested {
        let add: &[Method] = match e {
            EstimatorArg::Naive => &[Method::Naive],
            EstimatorArg::Cl => &[Method::ConditionalLoss],
            EstimatorArg::Iw => &[Method::InverseOdds],
            EstimatorArg::Dr => &[Method::DoublyRobust],
            EstimatorArg::Oracle => &[Method::Oracle],
            EstimatorArg::All => {
                let labeled = (0..data.n()).all(|i| data.is_source(i) || data.outcome()[i].is_some());
                if labeled {
                    &Method::ALL
                } else {
                    warnings.push("oracle skipped: target rows have no outcomes".into());
                    &Method::ALL[..4]
                }
            }
        };
        for m in add {
            if !methods.contains(m) {
                methods.push(*m);
            }
        }
    }
    methods
}

fn violation(row: Option<usize>, rule: &'static str, detail: String) -> Violation {
    Violation { row, rule, detail }
}

fn predictions(args: &EstimateArgs, table_extra: &std::collections::BTreeMap<String, Vec<f64>>, data: &Dataset) -> Result<Vec<f64>, CliError> {
    let g = match (&args.model, &args.ghat_col) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
            LogisticModelFile::parse(&text)?.to_prediction_model().predict_dataset(data)?
        }
        (None, Some(col)) => table_extra[col].clone(),
        _ => return Err(CliError::Usage("exactly one of --model or --ghat-col is required".into())),
    };
    let bad: Vec<Violation> = g
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_finite())
        .map(|(i, v)| violation(Some(i), "non-finite prediction", format!("prediction {v}")))
        .collect();
    if bad.is_empty() {
        Ok(g)
    } else {
        Err(Error::Validation(bad).into())
    }
}

pub fn run(args: EstimateArgs) -> Result<(), CliError> {
    if args.model.is_none() && args.ghat_col.is_none() {
        return Err(CliError::Usage("exactly one of --model or --ghat-col is required".into()));
    }
    if args.sandwich && args.boot > 0 {
        return Err(CliError::Usage("--sandwich cannot be combined with --boot".into()));
    }
    if args.sandwich && args.survey {
        return Err(CliError::Usage("--sandwich is only available without --survey".into()));
    }
    let extra: Vec<&str> = args.ghat_col.iter().map(String::as_str).collect();
    let table = read_csv(open(&args.data)?, &extra)?;
    let mut data = table.dataset;
    let mut warnings = Vec::new();

    let mut violations = Vec::new();
    if args.survey && !table.has_weights {
        violations.push(violation(None, "missing weights", "survey mode needs a W column".into()));
    }
    if !args.survey && data.weights().iter().any(|&w| w != 1.0) {
        warnings.push("W column ignored without --survey".into());
        let n = data.n();
        data = data.with_weights(vec![1.0; n])?;
    }
    let methods = resolve_methods(&args.estimator, &data, &mut warnings);
    violations.extend(data.validate(Mode::Estimate));
    if args.survey {
        violations.extend(data.validate(Mode::Survey).into_iter().filter(|v| v.rule == "source weight not 1"));
    }
    if methods.contains(&Method::Oracle) {
        violations.extend(data.validate(Mode::Oracle).into_iter().filter(|v| v.rule == "missing target outcome"));
    }
    if args.boot > 0 && args.boot_unit == UnitArg::Cluster {
        match data.clusters() {
            None => violations.push(violation(None, "missing clusters", "cluster bootstrap needs a CLUSTER column".into())),
            Some(c) => violations.extend(
                (0..data.n())
                    .filter(|&i| !data.is_source(i) && c[i].is_none())
                    .map(|i| violation(Some(i), "missing cluster", "target row has no CLUSTER label".into())),
            ),
        }
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations).into());
    }
    let g = predictions(&args, &table.extra, &data)?;

    let loss: Loss = args.loss.into();
    let nuisance = args.nuisance.resolve(loss, outcomes_binary(data.outcome()), args.survey);
    let cfg = PipelineConfig {
        loss,
        nuisance,
        methods: methods.clone(),
        seed: args.seed,
    };
    let out = run_pipeline(&data, &g, &cfg)?;
    let mut results: Vec<EstimateReport> = out
        .estimates
        .iter()
        .map(|&(method, estimate)| EstimateReport {
            method,
            estimate,
            std_error: None,
            se_source: None,
            ci: None,
        })
        .collect();

    if args.boot > 0 {
        let plan = BootstrapPlan {
            replicates: args.boot,
            unit: match args.boot_unit {
                UnitArg::Row => ResampleUnit::Row,
                UnitArg::Cluster => ResampleUnit::Cluster,
            },
            seed: args.seed,
            ci_method: match args.ci {
                CiArg::Percentile => CiMethod::Percentile,
                CiArg::Normal => CiMethod::Normal,
            },
        };
        let points: Vec<f64> = out.estimates.iter().map(|(_, v)| *v).collect();
        let pick = |v: &[f64], rows: &[usize]| -> Vec<f64> { rows.iter().map(|&i| v[i]).collect() };
        let values = |e: Vec<(Method, f64)>| e.into_iter().map(|(_, v)| v).collect::<Vec<_>>();
        let outcomes = match args.boot_refit {
            Switch::On => bootstrap_many(&data, &points, &plan, |bs, rows| {
                Ok(values(run_pipeline(bs, &pick(&g, rows), &cfg)?.estimates))
            })?,
            Switch::Off => {
                let fitted = out.nuisance.as_ref();
                bootstrap_many(&data, &points, &plan, |bs, rows| {
                    let p = fitted.map(|n| pick(&n.p_hat, rows));
                    let h = fitted.map(|n| pick(&n.h_hat, rows));
                    Ok(values(estimates_with(bs, &pick(&g, rows), loss, &methods, p, h)?.0))
                })?
            }
        };
        for (r, o) in results.iter_mut().zip(&outcomes) {
            r.std_error = Some(o.se);
            r.se_source = Some("bootstrap".into());
            r.ci = Some((o.ci_lower, o.ci_upper));
        }
        if let Some(o) = outcomes.first() {
            if !o.failures.is_empty() {
                warnings.push(format!(
                    "{} of {} bootstrap replicates failed; first: {}",
                    o.failures.len(),
                    args.boot,
                    o.failures[0].1
                ));
            }
            warnings.extend(o.warnings.iter().cloned());
        }
    }

    if args.sandwich {
        if let Some(r) = results.iter_mut().find(|r| r.method == Method::DoublyRobust) {
            let se = sandwich_se(&eif_values(&out.input, r.estimate)?)?;
            r.std_error = Some(se);
            r.se_source = Some("sandwich".into());
            r.ci = Some((r.estimate - Z_975 * se, r.estimate + Z_975 * se));
        } else {
            warnings.push("--sandwich ignored: dr not requested".into());
        }
    }

    let mut config = vec![
        ("command".to_string(), "estimate".to_string()),
        ("data".into(), args.data.display().to_string()),
        (
            "predictions".into(),
            match (&args.model, &args.ghat_col) {
                (Some(m), _) => format!("model:{}", m.display()),
                (_, Some(c)) => format!("column:{c}"),
                _ => unreachable!(),
            },
        ),
        ("loss".into(), loss.to_string()),
        (
            "estimators".into(),
            methods.iter().map(|m| m.label()).collect::<Vec<_>>().join(","),
        ),
    ];
    config.extend(nuisance_echo(&cfg.nuisance));
    config.extend([
        ("survey".into(), args.survey.to_string()),
        ("boot".into(), args.boot.to_string()),
        ("boot.unit".into(), format!("{:?}", args.boot_unit).to_lowercase()),
        ("ci".into(), format!("{:?}", args.ci).to_lowercase()),
        ("boot.refit".into(), format!("{:?}", args.boot_refit).to_lowercase()),
        ("sandwich".into(), args.sandwich.to_string()),
        ("seed".into(), args.seed.to_string()),
    ]);

    let mut nuisance = Vec::new();
    if let Some(n) = &out.nuisance {
        nuisance.push(("truncation_count".to_string(), n.truncation_count.to_string()));
        for (k, d) in n.diagnostics.iter().enumerate() {
            let prefix = format!("{}.fold{}", d.target, k / 2);
            nuisance.push((format!("{prefix}.converged"), d.converged.to_string()));
            nuisance.push((format!("{prefix}.iterations"), d.iterations.to_string()));
            nuisance.push((format!("{prefix}.ridge"), format!("{:?}", d.ridge)));
            nuisance.push((format!("{prefix}.max_abs_score"), format!("{:?}", d.max_abs_score)));
            if !d.converged {
                warnings.push(format!("{} model in fold {} did not converge", d.target, k / 2));
            }
        }
    }

    let doc = ReportDocument {
        config,
        n0: data.n_target(),
        n1: data.n_source(),
        nuisance,
        results,
        warnings,
    };
    emit(args.out.as_deref(), &doc.to_text()?)
}
