use std::path::PathBuf;

use clap::Args;
use covshift_core::{fit_main_effects, read_labeled_csv, Error, Violation};

use crate::failure::CliError;
use crate::output::{emit, open};

#[derive(Debug, Args)]
pub struct ModelFitArgs {
    /// Training CSV with a 0/1 Y column. Rows without Y are skipped.
    #[arg(long)]
    pub data: PathBuf,

    /// Predictor columns, comma separated (default: every covariate).
    /// Pass an empty string for an intercept-only model.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,

    /// Model file path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ModelFitArgs) -> Result<(), CliError> {
    let data = read_labeled_csv(open(&args.data)?)?;
    let columns: Vec<String> = match args.columns {
        Some(c) => c.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => data.names().to_vec(),
    };
    let rows: Vec<usize> = (0..data.n()).filter(|&i| data.outcome()[i].is_some()).collect();
    let mut bad = Vec::new();
    for &i in &rows {
        let row = data.row(i);
        for c in &columns {
            if let Some(j) = data.column_index(c) {
                if !row[j].is_finite() {
                    bad.push(Violation {
                        row: Some(i),
                        rule: "missing covariate",
                        detail: format!("column `{c}` is missing or non-finite"),
                    });
                }
            }
        }
        if let Some(y) = data.outcome()[i] {
            if y != 0.0 && y != 1.0 {
                bad.push(Violation {
                    row: Some(i),
                    rule: "non-binary outcome",
                    detail: format!("outcome {y} is not 0/1"),
                });
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Validation(bad).into());
    }
    let model = fit_main_effects(&data, &rows, &columns)?;
    emit(args.out.as_deref(), &model.to_text())
}
