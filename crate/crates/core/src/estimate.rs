//! Estimate records shared by every design, and the naive-ATE diagnostic.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Version tag written into every JSON estimate document.
pub const JSON_SCHEMA_VERSION: u32 = 1;

/// Which probability-shift parameter an estimate targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimand {
    /// Shift over the whole population.
    #[serde(rename = "PS")]
    Ps,
    /// Shift among treated units.
    #[serde(rename = "PST")]
    Pst,
    /// Shift among compliers.
    #[serde(rename = "LPS")]
    Lps,
    /// Shift at the discontinuity cutoff.
    #[serde(rename = "PSC")]
    Psc,
}

impl Estimand {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimand::Ps => "PS",
            Estimand::Pst => "PST",
            Estimand::Lps => "LPS",
            Estimand::Psc => "PSC",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Estimate for one outcome category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEstimate {
    /// User-facing outcome label.
    pub label: i64,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CategoryEstimate {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Per-category point estimates with normal-approximation intervals.
///
/// Intervals are `point ± z · se` and are never truncated to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub estimand: Estimand,
    pub alpha: f64,
    pub categories: Vec<CategoryEstimate>,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("standard error for category {0} is negative or not finite")]
    InvalidSe(usize),
}

/// Two-sided normal critical value `z_{1 - alpha/2}`.
pub fn normal_critical_value(alpha: f64) -> Result<f64, EstimateError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EstimateError::InvalidAlpha(alpha));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - alpha / 2.0))
}

impl ShiftEstimate {
    /// Assembles an estimate from per-category points and standard errors.
    pub fn from_parts(
        estimand: Estimand,
        labels: &[i64],
        points: &[f64],
        ses: &[f64],
        alpha: f64,
    ) -> Result<Self, EstimateError> {
        assert_eq!(labels.len(), points.len());
        assert_eq!(labels.len(), ses.len());
        let z = normal_critical_value(alpha)?;
        let mut categories = Vec::with_capacity(points.len());
        for (k, ((&label, &point), &se)) in labels.iter().zip(points).zip(ses).enumerate() {
            if !(se >= 0.0 && se.is_finite()) {
                return Err(EstimateError::InvalidSe(k + 1));
            }
            categories.push(CategoryEstimate {
                label,
                point,
                se,
                ci_low: point - z * se,
                ci_high: point + z * se,
            });
        }
        Ok(Self {
            estimand,
            alpha,
            categories,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub fn points(&self) -> Vec<f64> {
        self.categories.iter().map(|c| c.point).collect()
    }

    pub fn ses(&self) -> Vec<f64> {
        self.categories.iter().map(|c| c.se).collect()
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// The versioned JSON document emitted by the CLI.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": JSON_SCHEMA_VERSION,
            "estimand": self.estimand,
            "alpha": self.alpha,
            "categories": self.categories,
            "diagnostics": self.diagnostics,
            "warnings": self.warnings,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("estimate serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecompositionError {
    #[error("shifts sum to {0}, not zero")]
    ShiftsNotBalanced(f64),
    #[error("labels must be a permutation of 1..={0}")]
    InvalidLabels(usize),
}

/// Tolerance on `|Σ δ_m|` accepted by [`naive_ate_decomposition`].
pub const BALANCE_TOLERANCE: f64 = 1e-10;

/// The "ATE" obtained by treating category labels as numbers: `Σ_m label(m) · δ_m`.
///
/// Only a diagnostic. Relabeling the categories can change both its size and sign.
pub fn naive_ate_decomposition(shifts: &[f64], labels: &[u32]) -> Result<f64, DecompositionError> {
    let m = shifts.len();
    let mut seen = vec![false; m];
    if labels.len() != m {
        return Err(DecompositionError::InvalidLabels(m));
    }
    for &l in labels {
        let l = l as usize;
        if l == 0 || l > m || seen[l - 1] {
            return Err(DecompositionError::InvalidLabels(m));
        }
        seen[l - 1] = true;
    }
    let total: f64 = shifts.iter().sum();
    if total.abs() > BALANCE_TOLERANCE {
        return Err(DecompositionError::ShiftsNotBalanced(total));
    }
    Ok(labels.iter().zip(shifts).map(|(&l, &s)| l as f64 * s).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn naive_ate_examples() {
        let shifts = [0.0, -0.05, 0.05];
        let a = naive_ate_decomposition(&shifts, &[1, 2, 3]).unwrap();
        assert!((a - 0.05).abs() < 1e-15);
        let b = naive_ate_decomposition(&shifts, &[3, 2, 1]).unwrap();
        assert!((b + 0.05).abs() < 1e-15);
        assert_eq!(naive_ate_decomposition(&[0.0; 3], &[2, 3, 1]).unwrap(), 0.0);
    }

    #[test]
    fn naive_ate_errors() {
        assert!(matches!(
            naive_ate_decomposition(&[0.1, 0.0], &[1, 2]),
            Err(DecompositionError::ShiftsNotBalanced(_))
        ));
        assert_eq!(
            naive_ate_decomposition(&[0.0, 0.0], &[1, 1]),
            Err(DecompositionError::InvalidLabels(2))
        );
    }

    #[test]
    fn interval_is_symmetric_and_untruncated() {
        let e = ShiftEstimate::from_parts(Estimand::Ps, &[1, 2], &[0.99, -0.99], &[0.1, 0.1], 0.05)
            .unwrap();
        let z = normal_critical_value(0.05).unwrap();
        assert!((z - 1.959963984540054).abs() < 1e-12);
        let c = &e.categories[0];
        assert!(c.ci_high > 1.0);
        assert!(((c.ci_high - c.ci_low) - 2.0 * z * 0.1).abs() < 1e-12);
        assert!(c.ci_low <= c.point && c.point <= c.ci_high);
    }

    #[test]
    fn json_document_has_schema_tag() {
        let e = ShiftEstimate::from_parts(Estimand::Lps, &[1, 2], &[0.1, -0.1], &[0.0, 0.0], 0.1)
            .unwrap();
        let v = e.to_json_value();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["estimand"], "LPS");
        assert_eq!(v["categories"][1]["label"], 2);
    }

    fn balanced_shifts() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-0.5f64..0.5, 2..7).prop_map(|mut v| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            // exact balance: push the residual into the last entry
            let rest: f64 = v[..v.len() - 1].iter().sum();
            let last = v.len() - 1;
            v[last] = -rest;
            v
        })
    }

    proptest! {
        // Whenever two shifts are nonzero, some relabeling reverses the sign.
        #[test]
        fn relabeling_can_flip_sign(shifts in balanced_shifts()) {
            let nonzero = shifts.iter().filter(|s| s.abs() > 1e-6).count();
            prop_assume!(nonzero >= 2);
            let m = shifts.len();
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| shifts[a].partial_cmp(&shifts[b]).unwrap());
            // Largest labels on the largest shifts, then reversed.
            let mut up = vec![0u32; m];
            for (rank, &k) in order.iter().enumerate() {
                up[k] = rank as u32 + 1;
            }
            let down: Vec<u32> = up.iter().map(|&l| m as u32 + 1 - l).collect();
            let a = naive_ate_decomposition(&shifts, &up).unwrap();
            let b = naive_ate_decomposition(&shifts, &down).unwrap();
            prop_assert!(a > 0.0 && b < 0.0, "a={a} b={b}");
        }
    }
}
