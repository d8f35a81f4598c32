use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use covshift_core::simulation::{run_study, summarize, StudyRun};
use covshift_core::{Arm, ScenarioSpec};

use crate::failure::CliError;
use crate::output::{cell, emit, header};

pub const SIMULATE_SCHEMA: &str = "covshift-simulate/1";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML scenario file; fields left out keep their defaults.
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// Override the scenario's replication count.
    #[arg(long)]
    pub replications: Option<usize>,

    /// Override the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Arms to run, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub arms: Vec<String>,

    /// Summary CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also write every replicate's estimates to this CSV.
    #[arg(long)]
    pub raw: Option<PathBuf>,
}

fn load_spec(args: &SimulateArgs) -> Result<ScenarioSpec, CliError> {
    let mut spec = match &args.scenario {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read scenario {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad scenario {}: {e}", path.display())))?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(r) = args.replications {
        spec.replications = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

fn provenance(spec: &ScenarioSpec, arms: &[Arm], run: &StudyRun) -> Result<Vec<(String, String)>, CliError> {
    let resolved = toml::to_string(spec).map_err(|e| CliError::Usage(format!("cannot echo scenario: {e}")))?;
    let mut config = vec![("command".to_string(), "simulate".to_string())];
    let mut table = String::new();
    for line in resolved.lines().filter(|l| !l.trim().is_empty()) {
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            table = format!("{name}.");
        } else if let Some((k, v)) = line.split_once(" = ") {
            config.push((format!("{table}{k}"), v.trim_matches('"').to_string()));
        }
    }
    config.push(("arms".into(), arms.iter().map(|a| a.label()).collect::<Vec<_>>().join(",")));
    config.push(("truth".into(), format!("{:?}", run.truth)));
    config.push(("replicates_ok".into(), run.replicates.len().to_string()));
    config.push(("replicates_failed".into(), run.failures.len().to_string()));
    Ok(config)
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let spec = load_spec(&args)?;
    let arms: Vec<Arm> = if args.arms.is_empty() {
        Arm::ALL.to_vec()
    } else {
        args.arms
            .iter()
            .map(|s| Arm::from_str(s.trim()).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let run = run_study(&spec, &arms)?;
    for (idx, msg) in &run.failures {
        log::warn!("replicate {idx} failed: {msg}");
    }
    let config = provenance(&spec, &arms, &run)?;

    let mut text = header(SIMULATE_SCHEMA, &config);
    text.push_str("arm,avg_estimate,sqrt_n_bias,sqrt_n_sd,rel_bias_pct\n");
    for row in summarize(&run)? {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.arm,
            cell(row.avg_estimate),
            cell(row.sqrt_n_bias),
            cell(row.sqrt_n_sd),
            cell(row.rel_bias_pct)
        ));
    }
    emit(args.out.as_deref(), &text)?;

    if let Some(path) = &args.raw {
        let mut raw = header(SIMULATE_SCHEMA, &config);
        raw.push_str("replicate,truth,n_eval,n_target");
        for a in &arms {
            raw.push_str(&format!(",{a}"));
        }
        raw.push('\n');
        for r in &run.replicates {
            raw.push_str(&format!("{},{},{},{}", r.index, cell(r.truth), r.n_eval, r.n_target));
            for &a in &arms {
                raw.push_str(&format!(",{}", r.get(a).map(cell).unwrap_or_default()));
            }
            raw.push('\n');
        }
        fs::write(path, raw)?;
    }
    Ok(())
}
