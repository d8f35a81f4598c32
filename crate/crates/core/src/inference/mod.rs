//! Standard errors and confidence intervals.

pub mod bootstrap;
pub mod eif;

pub use bootstrap::{bootstrap, bootstrap_many, sample_sd, BootstrapOutcome, BootstrapPlan, CiMethod, ResampleUnit, Resampler};
pub use eif::{eif_values, sandwich_se, InfluenceValues};
