//! Flags shared between subcommands.

use clap::{Args, ValueEnum};
use covshift_core::nuisance::DEFAULT_EPSILON;
use covshift_core::{FeatureMap, HStrategy, Loss, NuisanceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Brier,
    Absolute,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Brier => Loss::Squared,
            LossArg::Absolute => Loss::Absolute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapArg {
    Linear,
    Quadratic,
    Spline,
}

impl From<MapArg> for FeatureMap {
    fn from(m: MapArg) -> Self {
        match m {
            MapArg::Linear => FeatureMap::Linear,
            MapArg::Quadratic => FeatureMap::Quadratic,
            MapArg::Spline => FeatureMap::spline(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Binary,
    Direct,
}

impl From<StrategyArg> for HStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Binary => HStrategy::Binary,
            StrategyArg::Direct => HStrategy::Direct,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct NuisanceArgs {
    /// Feature map for the membership model p(x) = Pr[D=1 | x].
    #[arg(long, value_enum, default_value_t = MapArg::Linear)]
    pub p_map: MapArg,

    /// Feature map for the conditional loss model h(x).
    #[arg(long, value_enum, default_value_t = MapArg::Linear)]
    pub h_map: MapArg,

    /// How h is learned. Defaults to `binary` for Brier loss on 0/1
    /// outcomes and `direct` otherwise.
    #[arg(long, value_enum)]
    pub h_strategy: Option<StrategyArg>,

    /// Cross-fitting folds (1 = fit and predict on all rows).
    #[arg(long, default_value_t = 1)]
    pub folds: usize,

    /// Clip p-hat to [epsilon, 1 - epsilon].
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
}

impl NuisanceArgs {
    /// `binary_outcomes` decides the default h strategy.
    pub fn resolve(&self, loss: Loss, binary_outcomes: bool, survey_weighted: bool) -> NuisanceConfig {
        let h_strategy = match self.h_strategy {
            Some(s) => s.into(),
            None if loss == Loss::Squared && binary_outcomes => HStrategy::Binary,
            None => HStrategy::Direct,
        };
        NuisanceConfig {
            p_map: self.p_map.into(),
            h_map: self.h_map.into(),
            h_strategy,
            folds: self.folds,
            epsilon: self.epsilon,
            survey_weighted,
        }
    }
}

/// `key=value` echo of a nuisance configuration.
pub fn nuisance_echo(cfg: &NuisanceConfig) -> Vec<(String, String)> {
    vec![
        ("p.map".into(), cfg.p_map.to_string()),
        ("h.map".into(), cfg.h_map.to_string()),
        ("h.strategy".into(), cfg.h_strategy.to_string()),
        ("folds".into(), cfg.folds.to_string()),
        ("epsilon".into(), format!("{:?}", cfg.epsilon)),
    ]
}

/// True when every observed outcome is 0 or 1.
pub fn outcomes_binary(outcomes: &[Option<f64>]) -> bool {
    outcomes.iter().flatten().all(|&y| y == 0.0 || y == 1.0)
}
