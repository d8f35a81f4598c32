use std::path::PathBuf;

use clap::{Args, ValueEnum};
use covshift_core::simulation::{run_split_eval, summarize_split_eval, SplitEvalConfig, SplitMode};
use covshift_core::{read_labeled_csv, Loss};

use crate::args::{nuisance_echo, outcomes_binary, LossArg, NuisanceArgs};
use crate::failure::CliError;
use crate::output::{cell, emit, header, open};

pub const SPLIT_SCHEMA: &str = "covshift-split-eval/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Uniform,
    Shifted,
}

#[derive(Debug, Args)]
pub struct SplitEvalArgs {
    /// Fully labeled CSV (every row has Y); a D column, if present, is ignored.
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, value_enum, default_value_t = ModeArg::Uniform)]
    pub mode: ModeArg,

    /// Membership coefficient magnitude for `--mode shifted`.
    #[arg(long, default_value_t = 0.05)]
    pub shift: f64,

    #[arg(long, default_value_t = 1000)]
    pub splits: usize,

    /// Fraction of each split's source rows used to fit the evaluated model.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub train_fraction: f64,

    #[arg(long, value_enum, default_value_t = LossArg::Brier)]
    pub loss: LossArg,

    #[command(flatten)]
    pub nuisance: NuisanceArgs,

    /// Bootstrap replicates per split (0 skips the bootstrap).
    #[arg(long, default_value_t = 0)]
    pub boot: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Summary CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: SplitEvalArgs) -> Result<(), CliError> {
    if !(args.train_fraction > 0.0 && args.train_fraction < 1.0) {
        return Err(CliError::Usage("--train-fraction must lie in (0, 1)".into()));
    }
    let labeled = read_labeled_csv(open(&args.data)?)?;
    let loss: Loss = args.loss.into();
    let cfg = SplitEvalConfig {
        mode: match args.mode {
            ModeArg::Uniform => SplitMode::Uniform,
            ModeArg::Shifted => SplitMode::Shifted(args.shift),
        },
        splits: args.splits,
        seed: args.seed,
        train_fraction: args.train_fraction,
        loss,
        nuisance: args.nuisance.resolve(loss, outcomes_binary(labeled.outcome()), false),
        boot_replicates: args.boot,
    };
    let run = run_split_eval(&labeled, &cfg)?;

    let mut config = vec![
        ("command".to_string(), "split-eval".to_string()),
        ("data".into(), args.data.display().to_string()),
        ("mode".into(), format!("{:?}", args.mode).to_lowercase()),
    ];
    if args.mode == ModeArg::Shifted {
        config.push(("shift".into(), format!("{:?}", args.shift)));
    }
    config.extend([
        ("splits".into(), args.splits.to_string()),
        ("train_fraction".into(), format!("{:?}", args.train_fraction)),
        ("loss".into(), loss.to_string()),
    ]);
    config.extend(nuisance_echo(&cfg.nuisance));
    config.extend([
        ("boot".into(), args.boot.to_string()),
        ("seed".into(), args.seed.to_string()),
        (
            "membership_coefficients".into(),
            run.coefficients.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(" "),
        ),
    ]);

    let mut text = header(SPLIT_SCHEMA, &config);
    text.push_str("method,avg_estimate,bias,mc_se,sd,avg_boot_se\n");
    for row in summarize_split_eval(&run) {
        let defined = |v: f64| if run.splits.len() > 1 { cell(v) } else { String::new() };
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.method,
            cell(row.avg_estimate),
            cell(row.bias),
            defined(row.mc_se),
            defined(row.sd),
            row.avg_boot_se.map(cell).unwrap_or_default()
        ));
    }
    emit(args.out.as_deref(), &text)
}
