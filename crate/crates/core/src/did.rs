//! Probability shift on the treated in a two-group, two-period design.
//!
//! The point estimate is the difference-in-differences of cell proportions
//! for each category. The same number is the interaction coefficient of the
//! saturated regression `1{Y=m} = β₀ + β₁D + β₂Post + β₃D·Post + ε`, which
//! supplies the unit-clustered standard errors.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::estimate::{EstimateError, Estimand, ShiftEstimate};
use crate::linalg::{cr1_covariance, hc0_covariance, ols};
use crate::sample::{validate_sample, Design, Period, QualSample, ValidationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DidError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("no observations with D={d} in the {period:?} period")]
    EmptyCell { d: u8, period: Period },
    #[error("need at least 2 clusters for clustered standard errors")]
    TooFewClusters,
}

/// Cell proportions and regression output per category.
#[derive(Debug, Clone, PartialEq)]
pub struct DidFit {
    /// `proportions[d][s][m] = P̂(Y_s = m | D = d)`, with `s = 0` pre and `s = 1` post.
    pub proportions: [[Vec<f64>; 2]; 2],
    /// Difference-in-differences of proportions.
    pub plug_in: Vec<f64>,
    /// Interaction coefficient `β̂_{m3}`.
    pub interaction: Vec<f64>,
    pub se: Vec<f64>,
    /// Unit-clustered (CR1) when unit ids are present, otherwise HC1.
    pub clustered: bool,
    pub n_clusters: usize,
}

/// Fits both the plug-in formula and the interaction regression.
pub fn fit_did(sample: &QualSample) -> Result<DidFit, DidError> {
    let s = validate_sample(sample, Design::Did)?;
    let period = s.period().expect("validated");
    let m_total = s.m();
    let n = s.len();

    let mut counts = [[vec![0usize; m_total], vec![0usize; m_total]], [vec![0usize; m_total], vec![0usize; m_total]]];
    let mut totals = [[0usize; 2]; 2];
    for i in 0..n {
        let d = s.treatment()[i] as usize;
        let p = period[i].index();
        counts[d][p][s.category(i)] += 1;
        totals[d][p] += 1;
    }
    for d in 0..2u8 {
        for (p, per) in [Period::Pre, Period::Post].into_iter().enumerate() {
            if totals[d as usize][p] == 0 {
                return Err(DidError::EmptyCell { d, period: per });
            }
        }
    }
    let proportions = [0, 1].map(|d| {
        [0, 1].map(|p| counts[d][p].iter().map(|&c| c as f64 / totals[d][p] as f64).collect::<Vec<f64>>())
    });
    let plug_in: Vec<f64> = (0..m_total)
        .map(|m| (proportions[1][1][m] - proportions[1][0][m]) - (proportions[0][1][m] - proportions[0][0][m]))
        .collect();

    let x = DMatrix::from_fn(n, 4, |i, j| {
        let d = f64::from(s.treatment()[i]);
        let post = if period[i] == Period::Post { 1.0 } else { 0.0 };
        match j {
            0 => 1.0,
            1 => d,
            2 => post,
            _ => d * post,
        }
    });

    let clusters = s.unit_id().map(|ids| {
        let mut index: HashMap<u64, usize> = HashMap::new();
        let dense: Vec<usize> = ids
            .iter()
            .map(|id| {
                let next = index.len();
                *index.entry(*id).or_insert(next)
            })
            .collect();
        (dense, index.len())
    });
    if let Some((_, g)) = &clusters {
        if *g < 2 {
            return Err(DidError::TooFewClusters);
        }
    }

    let mut interaction = Vec::with_capacity(m_total);
    let mut se = Vec::with_capacity(m_total);
    for m in 0..m_total {
        let y = DVector::from_iterator(n, (0..n).map(|i| if s.category(i) == m { 1.0 } else { 0.0 }));
        let fit = ols(&x, &y).expect("all four cells are non-empty");
        let cov = match &clusters {
            Some((dense, g)) => cr1_covariance(&x, &fit.residuals, &fit.bread, dense, *g),
            None => hc0_covariance(&x, &fit.residuals, &fit.bread) * (n as f64 / (n as f64 - 4.0)),
        };
        interaction.push(fit.coef[3]);
        se.push(cov[(3, 3)].max(0.0).sqrt());
    }

    Ok(DidFit {
        proportions,
        plug_in,
        interaction,
        se,
        clustered: clusters.is_some(),
        n_clusters: clusters.map_or(0, |c| c.1),
    })
}

/// PST estimate from a two-period panel or repeated cross-section.
pub fn estimate_pst_did(sample: &QualSample, alpha: f64) -> Result<ShiftEstimate, DidError> {
    let s = validate_sample(sample, Design::Did)?;
    let fit = fit_did(&s)?;
    let gap = fit
        .plug_in
        .iter()
        .zip(&fit.interaction)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut est = ShiftEstimate::from_parts(Estimand::Pst, &s.labels(), &fit.plug_in, &fit.se, alpha)?
        .with_diagnostic("clustered", if fit.clustered { 1.0 } else { 0.0 })
        .with_diagnostic("n_clusters", fit.n_clusters as f64)
        .with_diagnostic("max_plugin_ols_gap", gap)
        .with_diagnostic("n", s.len() as f64);
    if !fit.clustered {
        est.warn("no unit ids: treated as repeated cross-sections with heteroskedasticity-robust SEs");
    }
    Ok(est)
}
