//! Estimating the risk of a prediction model in a target population whose
//! covariate distribution differs from the population the model's test
//! data came from.
//!
//! Source rows (`D = 1`) carry outcomes; target rows (`D = 0`) carry only
//! covariates. The estimators combine a model of `Pr[D = 1 | X]` and a model
//! of the expected loss given `X` into an estimate of the mean loss over the
//! target population.

pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod loss;
pub mod model;
pub mod nuisance;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod simulation;

pub use data::{read_csv, read_labeled_csv, CsvTable, Dataset, Mode};
pub use error::{Error, Result, Violation};
pub use estimators::{estimate, EstimatorInput, Method};
pub use inference::{BootstrapOutcome, BootstrapPlan, CiMethod, ResampleUnit};
pub use loss::Loss;
pub use model::{fit_main_effects, LogisticModel, LogisticModelFile, PredictionModel, Predictor};
pub use nuisance::{cross_fit, FeatureMap, HStrategy, NuisanceConfig, NuisanceEstimates};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use report::{EstimateReport, ReportDocument};
pub use simulation::{Arm, ScenarioSpec};
