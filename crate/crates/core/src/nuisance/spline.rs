//! Clamped B-spline basis for one covariate.

use serde::{Deserialize, Serialize};

/// B-spline basis with interior knots placed at training quantiles.
///
/// Inputs outside `[lower, upper]` are clamped to the nearest boundary
/// before evaluation, so the basis stays bounded on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    degree: usize,
    // clamped knot vector: degree+1 copies of each boundary
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// Basis for `values` with `interior` knots at the `i/(interior+1)`
    /// quantiles.
    pub fn from_training(values: &[f64], interior: usize, degree: usize) -> Self {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lower, upper) = match (sorted.first(), sorted.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        let inner = (1..=interior).map(|i| quantile(&sorted, i as f64 / (interior + 1) as f64));
        Self::with_knots(lower, upper, inner.collect(), degree)
    }

    pub fn with_knots(lower: f64, upper: f64, interior: Vec<f64>, degree: usize) -> Self {
        let mut knots = vec![lower; degree + 1];
        knots.extend(interior.into_iter().map(|k| k.clamp(lower, upper)));
        knots.extend(std::iter::repeat_n(upper, degree + 1));
        Self { degree, knots }
    }

    pub fn size(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Writes the `degree + 1` possibly-nonzero basis values into `out` and
    /// returns the index of the first one.
    pub fn eval_nonzero(&self, x: f64, out: &mut [f64]) -> usize {
        let p = self.degree;
        debug_assert!(out.len() > p);
        let t = &self.knots;
        let last = self.size() - 1;
        if self.upper() <= self.lower() {
            // constant covariate: a single active function keeps the
            // partition of unity
            out[..=p].fill(0.0);
            out[0] = 1.0;
            return 0;
        }
        let x = x.clamp(self.lower(), self.upper());

        // knot span k with t[k] <= x < t[k+1] and positive length
        let mut k = if x >= self.upper() {
            last
        } else {
            // first index with t[idx] > x, minus one
            t.partition_point(|&knot| knot <= x) - 1
        };
        k = k.clamp(p, last);
        while t[k + 1] <= t[k] && k > p {
            k -= 1;
        }

        let mut left = [0.0f64; 8];
        let mut right = [0.0f64; 8];
        assert!(p < left.len(), "spline degree above 7 is not supported");
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[k + 1 - j];
            right[j] = t[k + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { out[r] / denom } else { 0.0 };
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        k - p
    }

    /// Full basis row of length [`size`](Self::size).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.size()];
        let mut buf = vec![0.0; self.degree + 1];
        let first = self.eval_nonzero(x, &mut buf);
        for (r, v) in buf.into_iter().enumerate() {
            if first + r < row.len() {
                row[first + r] = v;
            }
        }
        row
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
