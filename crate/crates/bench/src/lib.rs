//! Shared benchmark fixtures.

use covshift_core::nuisance::{build_design, Design};
use covshift_core::simulation::screening_cohort;
use covshift_core::{Dataset, FeatureMap};

/// Synthetic labeled cohort of `n` rows.
pub fn cohort(n: usize) -> Dataset {
    screening_cohort(n, 1)
}

/// Main-effects logistic problem: design with intercept, 0/1 labels and
/// unit weights.
pub fn logistic_problem(n: usize) -> (Design, Vec<f64>, Vec<f64>) {
    let data = cohort(n);
    let design = build_design(&data, &FeatureMap::Linear).expect("linear design");
    let labels = data.outcome().iter().map(|y| y.expect("labeled")).collect();
    (design, labels, vec![1.0; n])
}
