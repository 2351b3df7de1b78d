//! Local probability shifts (compliers) by two-stage least squares on each
//! category indicator, with a single binary instrument and no covariates.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::estimate::{EstimateError, Estimand, ShiftEstimate};
use crate::linalg::{hc0_covariance, ols};
use crate::sample::{validate_sample, Design, QualSample, ValidationError};

/// First-stage coefficients below this magnitude are flagged as weak.
pub const WEAK_INSTRUMENT_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IvError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("instrument arm Z={0} has no units")]
    DegenerateInstrument(u8),
    #[error("first stage is exactly zero; the instrument does not move treatment")]
    WeakInstrument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IvCovariance {
    /// Heteroskedasticity-robust HC0.
    #[default]
    Robust,
    /// Classical `σ² (ẐᵀẐ)⁻¹` with `n − 2` degrees of freedom.
    Homoskedastic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvOptions {
    pub alpha: f64,
    pub covariance: IvCovariance,
}

impl Default for IvOptions {
    fn default() -> Self {
        Self { alpha: 0.05, covariance: IvCovariance::Robust }
    }
}

/// Fitted first and second stages.
#[derive(Debug, Clone, PartialEq)]
pub struct IvFit {
    /// `(γ̂₀, γ̂₁)` from `D = γ₀ + γ₁ Z + ν`.
    pub first_stage: (f64, f64),
    /// `α̂_{m0}` per category.
    pub intercepts: Vec<f64>,
    /// `α̂_{m1}` per category: the LPS estimates.
    pub slopes: Vec<f64>,
    pub slope_se: Vec<f64>,
}

impl IvFit {
    pub fn first_stage_strength(&self) -> f64 {
        self.first_stage.1
    }
}

/// Wald ratios `[P̂(Y=m|Z=1) − P̂(Y=m|Z=0)] / [P̂(D=1|Z=1) − P̂(D=1|Z=0)]`.
///
/// Computed from cell counts, independently of the regression path.
pub fn wald_ratios(sample: &QualSample) -> Result<Vec<f64>, IvError> {
    let s = validate_sample(sample, Design::Iv)?;
    let z = s.instrument().expect("validated");
    let m_total = s.m();
    let mut nz = [0usize; 2];
    let mut dz = [0usize; 2];
    let mut yz = vec![[0usize; 2]; m_total];
    for i in 0..s.len() {
        let zi = z[i] as usize;
        nz[zi] += 1;
        dz[zi] += s.treatment()[i] as usize;
        yz[s.category(i)][zi] += 1;
    }
    if let Some(arm) = nz.iter().position(|&c| c == 0) {
        return Err(IvError::DegenerateInstrument(arm as u8));
    }
    let share = |count: usize, arm: usize| count as f64 / nz[arm] as f64;
    let denom = share(dz[1], 1) - share(dz[0], 0);
    if denom == 0.0 {
        return Err(IvError::WeakInstrument);
    }
    Ok(yz.iter().map(|c| (share(c[1], 1) - share(c[0], 0)) / denom).collect())
}

/// Two-stage least squares of every category indicator.
pub fn fit_2sls(sample: &QualSample, covariance: IvCovariance) -> Result<IvFit, IvError> {
    let s = validate_sample(sample, Design::Iv)?;
    let z = s.instrument().expect("validated");
    for arm in [0u8, 1] {
        if !z.contains(&arm) {
            return Err(IvError::DegenerateInstrument(arm));
        }
    }
    let n = s.len();
    let zmat = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { f64::from(z[i]) });
    let d = DVector::from_iterator(n, s.treatment().iter().map(|&v| f64::from(v)));
    let first = ols(&zmat, &d).expect("binary instrument with both arms has full rank");
    let (g0, g1) = (first.coef[0], first.coef[1]);
    if g1 == 0.0 {
        return Err(IvError::WeakInstrument);
    }

    let dhat = &zmat * &first.coef;
    let xhat = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { dhat[i] });
    // Structural residuals use observed D, not the fitted D̂.
    let xobs = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { d[i] });

    let m_total = s.m();
    let mut intercepts = Vec::with_capacity(m_total);
    let mut slopes = Vec::with_capacity(m_total);
    let mut slope_se = Vec::with_capacity(m_total);
    for m in 0..m_total {
        let y = DVector::from_iterator(n, (0..n).map(|i| if s.category(i) == m { 1.0 } else { 0.0 }));
        let second = ols(&xhat, &y).expect("first stage is non-degenerate");
        let resid = &y - &xobs * &second.coef;
        let cov = match covariance {
            IvCovariance::Robust => hc0_covariance(&xhat, &resid, &second.bread),
            IvCovariance::Homoskedastic => &second.bread * (resid.norm_squared() / (n as f64 - 2.0)),
        };
        intercepts.push(second.coef[0]);
        slopes.push(second.coef[1]);
        slope_se.push(cov[(1, 1)].max(0.0).sqrt());
    }
    Ok(IvFit { first_stage: (g0, g1), intercepts, slopes, slope_se })
}

/// LPS estimate; a weak first stage is flagged but the estimate is still returned.
pub fn estimate_lps(sample: &QualSample, opts: &IvOptions) -> Result<ShiftEstimate, IvError> {
    let s = validate_sample(sample, Design::Iv)?;
    let fit = fit_2sls(&s, opts.covariance)?;
    let mut est = ShiftEstimate::from_parts(Estimand::Lps, &s.labels(), &fit.slopes, &fit.slope_se, opts.alpha)?
        .with_diagnostic("first_stage_intercept", fit.first_stage.0)
        .with_diagnostic("first_stage_coef", fit.first_stage.1)
        .with_diagnostic("n", s.len() as f64);
    if fit.first_stage.1.abs() < WEAK_INSTRUMENT_THRESHOLD {
        est.diagnostics.insert("weak_instrument".into(), 1.0);
        est.warn(format!(
            "weak instrument: first-stage coefficient {:.4} is below {WEAK_INSTRUMENT_THRESHOLD}",
            fit.first_stage.1
        ));
    }
    if opts.covariance == IvCovariance::Homoskedastic {
        est.diagnostics.insert("homoskedastic_se".into(), 1.0);
    }
    Ok(est)
}
