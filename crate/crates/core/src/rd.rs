//! Probability shift at the cutoff of a sharp regression discontinuity.
//!
//! Each category indicator is smoothed by local-linear regression with a
//! triangular kernel on either side of the cutoff; the shift is the gap
//! between the two boundary intercepts. With bias correction the leading
//! curvature term is estimated by a local-quadratic fit and subtracted, and
//! the standard error is computed for the corrected linear smoother, so the
//! interval accounts for the extra noise of the correction.
//!
//! Bandwidth selection is a rule-of-thumb MSE bandwidth pooled over
//! categories: residual variances and curvatures come from global quadratic
//! fits on each side, and the curvature's own sampling variance acts as the
//! regularizer.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::estimate::{EstimateError, Estimand, ShiftEstimate};
use crate::linalg::{ols, spd_inverse};
use crate::sample::{validate_sample, Design, QualSample, ValidationError};

/// MSE-optimal bandwidth constant for a local-linear boundary fit with the
/// triangular kernel.
const TRIANGULAR_CONSTANT: f64 = 3.4375;
/// Fewest units with positive kernel weight accepted on each side.
pub const MIN_EFFECTIVE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Above => "above",
            Side::Below => "below",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RdError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("fewer than {MIN_EFFECTIVE} units with positive kernel weight {0} the cutoff")]
    InsufficientLocalData(Side),
    #[error("bandwidth selection degenerated to a non-positive value")]
    ZeroBandwidth,
    #[error("fixed bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdOptions {
    pub bandwidth: Bandwidth,
    pub bias_correction: bool,
    /// Select a bandwidth per category instead of one common bandwidth.
    pub per_category_bandwidth: bool,
    pub alpha: f64,
    /// Neighbors used by the nearest-neighbor residual variance.
    pub nn_neighbors: usize,
}

impl Default for RdOptions {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Auto,
            bias_correction: true,
            per_category_bandwidth: false,
            alpha: 0.05,
            nn_neighbors: 3,
        }
    }
}

/// One category's boundary fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCategoryFit {
    pub limit_above: f64,
    pub limit_below: f64,
    /// `limit_above − limit_below`, bias-corrected when requested.
    pub point: f64,
    pub se: f64,
    /// Uncorrected local-linear gap and its standard error.
    pub conventional_point: f64,
    pub conventional_se: f64,
    pub bandwidth_main: f64,
    pub bandwidth_bias: f64,
    pub n_effective_above: usize,
    pub n_effective_below: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdFit {
    pub kernel: &'static str,
    pub bias_corrected: bool,
    pub categories: Vec<RdCategoryFit>,
}

#[inline]
fn triangular(u: f64, h: f64) -> f64 {
    (1.0 - u.abs() / h).max(0.0)
}

// Observations on one side, sorted by distance to the cutoff.
struct SideData {
    side: Side,
    u: Vec<f64>,
    unit: Vec<usize>,
    // indices (into u) of each unit's nearest same-side neighbors
    neighbors: Vec<Vec<usize>>,
}

impl SideData {
    fn new(side: Side, mut pairs: Vec<(f64, usize)>, j: usize) -> Self {
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let u: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let unit: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let neighbors = (0..u.len()).map(|i| nearest_neighbors(&u, i, j)).collect();
        Self { side, u, unit, neighbors }
    }

    fn n_effective(&self, h: f64) -> usize {
        self.u.iter().filter(|&&u| triangular(u, h) > 0.0).count()
    }
}

// `j` nearest neighbors of `u[i]` in sorted `u`, excluding `i`; ties go to the lower index.
fn nearest_neighbors(u: &[f64], i: usize, j: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(j);
    let (mut lo, mut hi) = (i, i + 1);
    while out.len() < j && (lo > 0 || hi < u.len()) {
        let left = if lo > 0 { Some((u[i] - u[lo - 1]).abs()) } else { None };
        let right = if hi < u.len() { Some((u[hi] - u[i]).abs()) } else { None };
        match (left, right) {
            (Some(l), Some(r)) if l <= r => {
                lo -= 1;
                out.push(lo);
            }
            (Some(_), None) => {
                lo -= 1;
                out.push(lo);
            }
            (_, Some(_)) => {
                out.push(hi);
                hi += 1;
            }
            (None, None) => break,
        }
    }
    out
}

/// Per-unit weights `w` such that coefficient `coef` of a kernel-weighted
/// polynomial fit of degree `degree` equals `Σ wᵢ yᵢ`.
fn local_poly_weights(u: &[f64], h: f64, degree: usize, coef: usize) -> Option<Vec<f64>> {
    let q = degree + 1;
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut r = vec![0.0; q];
    for &ui in u {
        let k = triangular(ui, h);
        if k == 0.0 {
            continue;
        }
        fill_powers(ui, &mut r);
        for a in 0..q {
            for b in 0..q {
                gram[(a, b)] += k * r[a] * r[b];
            }
        }
    }
    let inv = spd_inverse(&gram)?;
    let row = inv.row(coef).clone_owned();
    Some(
        u.iter()
            .map(|&ui| {
                let k = triangular(ui, h);
                if k == 0.0 {
                    return 0.0;
                }
                fill_powers(ui, &mut r);
                k * (0..q).map(|a| row[a] * r[a]).sum::<f64>()
            })
            .collect(),
    )
}

fn fill_powers(u: f64, r: &mut [f64]) {
    let mut p = 1.0;
    for v in r.iter_mut() {
        *v = p;
        p *= u;
    }
}

// Linear smoother weights for one side's boundary value.
struct SideSmoother {
    conventional: Vec<f64>,
    corrected: Vec<f64>,
    n_effective: usize,
}

fn side_smoother(data: &SideData, h: f64, b: f64) -> Result<SideSmoother, RdError> {
    let n_effective = data.n_effective(h);
    if n_effective < MIN_EFFECTIVE || data.n_effective(b) < MIN_EFFECTIVE {
        return Err(RdError::InsufficientLocalData(data.side));
    }
    let insufficient = || RdError::InsufficientLocalData(data.side);
    let conventional = local_poly_weights(&data.u, h, 1, 0).ok_or_else(insufficient)?;
    let curvature = local_poly_weights(&data.u, b, 2, 2).ok_or_else(insufficient)?;
    let bias_scale: f64 = conventional.iter().zip(&data.u).map(|(w, u)| w * u * u).sum();
    let corrected = conventional.iter().zip(&curvature).map(|(w, v)| w - bias_scale * v).collect();
    Ok(SideSmoother { conventional, corrected, n_effective })
}

// Nearest-neighbor residual variances of one category indicator.
fn nn_variances(data: &SideData, y: &[f64]) -> Vec<f64> {
    (0..data.u.len())
        .map(|i| {
            let nb = &data.neighbors[i];
            let j = nb.len() as f64;
            if nb.is_empty() {
                return 0.0;
            }
            let mean: f64 = nb.iter().map(|&k| y[k]).sum::<f64>() / j;
            j / (j + 1.0) * (y[i] - mean).powi(2)
        })
        .collect()
}

fn apply(weights: &[f64], y: &[f64], var: &[f64]) -> (f64, f64) {
    let point = weights.iter().zip(y).map(|(w, v)| w * v).sum();
    let variance = weights.iter().zip(var).map(|(w, s)| w * w * s).sum();
    (point, variance)
}

struct Prepared {
    above: SideData,
    below: SideData,
    // indicator values aligned with each side's sorted order, per category
    y_above: Vec<Vec<f64>>,
    y_below: Vec<Vec<f64>>,
    running: Vec<f64>,
    cutoff: f64,
}

fn prepare(s: &QualSample, opts: &RdOptions) -> Result<Prepared, RdError> {
    let x = s.running_var().expect("validated");
    let c = s.cutoff().expect("validated");
    let mut up = Vec::new();
    let mut down = Vec::new();
    for (i, &xi) in x.iter().enumerate() {
        if xi >= c {
            up.push((xi - c, i));
        } else {
            down.push((xi - c, i));
        }
    }
    if up.len() < MIN_EFFECTIVE {
        return Err(RdError::InsufficientLocalData(Side::Above));
    }
    if down.len() < MIN_EFFECTIVE {
        return Err(RdError::InsufficientLocalData(Side::Below));
    }
    let j = opts.nn_neighbors.max(1);
    let above = SideData::new(Side::Above, up, j);
    let below = SideData::new(Side::Below, down, j);
    let indicators = |d: &SideData| -> Vec<Vec<f64>> {
        (0..s.m())
            .map(|m| d.unit.iter().map(|&i| if s.category(i) == m { 1.0 } else { 0.0 }).collect())
            .collect()
    };
    Ok(Prepared {
        y_above: indicators(&above),
        y_below: indicators(&below),
        above,
        below,
        running: x.to_vec(),
        cutoff: c,
    })
}

// Global quadratic fit per side: (curvature 2β₂, its sampling variance, residual variance).
fn global_quadratic(u: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = u.len();
    if n <= 3 {
        return None;
    }
    let x = DMatrix::from_fn(n, 3, |i, j| u[i].powi(j as i32));
    let fit = ols(&x, &DVector::from_column_slice(y))?;
    let sigma2 = fit.residuals.norm_squared() / (n as f64 - 3.0);
    let curvature = 2.0 * fit.coef[2];
    let curvature_var = 4.0 * sigma2 * fit.bread[(2, 2)];
    Some((curvature, curvature_var, sigma2))
}

/// Rule-of-thumb bandwidth pooled over `categories`.
fn auto_bandwidth(p: &Prepared, categories: &[usize]) -> Result<f64, RdError> {
    let n = p.running.len() as f64;
    let mean = p.running.iter().sum::<f64>() / n;
    let sd = (p.running.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let pilot = 1.84 * sd * n.powf(-0.2);
    if !(pilot > 0.0 && pilot.is_finite()) {
        return Err(RdError::ZeroBandwidth);
    }
    let near = p.running.iter().filter(|&&x| (x - p.cutoff).abs() <= pilot).count() as f64;
    let density = near / (2.0 * n * pilot);
    if density <= 0.0 {
        return Err(RdError::ZeroBandwidth);
    }

    let mut variance = 0.0;
    let mut curvature_gap = 0.0;
    let mut regularizer = 0.0;
    for &m in categories {
        let (ca, va, sa) = global_quadratic(&p.above.u, &p.y_above[m]).ok_or(RdError::ZeroBandwidth)?;
        let (cb, vb, sb) = global_quadratic(&p.below.u, &p.y_below[m]).ok_or(RdError::ZeroBandwidth)?;
        variance += sa + sb;
        curvature_gap += (ca - cb).powi(2);
        regularizer += va + vb;
    }

    let h_max = p.running.iter().map(|x| (x - p.cutoff).abs()).fold(0.0, f64::max);
    let denom = density * (curvature_gap + regularizer);
    let h = if variance == 0.0 || denom == 0.0 {
        h_max
    } else {
        TRIANGULAR_CONSTANT * (variance / denom).powf(0.2) * n.powf(-0.2)
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(RdError::ZeroBandwidth);
    }
    Ok(h.min(h_max))
}

fn fit_category(
    p: &Prepared,
    m: usize,
    h: f64,
    b: f64,
    above: &SideSmoother,
    below: &SideSmoother,
    bias_correction: bool,
) -> RdCategoryFit {
    let var_above = nn_variances(&p.above, &p.y_above[m]);
    let var_below = nn_variances(&p.below, &p.y_below[m]);
    let (conv_a, conv_va) = apply(&above.conventional, &p.y_above[m], &var_above);
    let (conv_b, conv_vb) = apply(&below.conventional, &p.y_below[m], &var_below);
    let (lim_a, va, lim_b, vb) = if bias_correction {
        let (a, va) = apply(&above.corrected, &p.y_above[m], &var_above);
        let (b, vb) = apply(&below.corrected, &p.y_below[m], &var_below);
        (a, va, b, vb)
    } else {
        (conv_a, conv_va, conv_b, conv_vb)
    };
    RdCategoryFit {
        limit_above: lim_a,
        limit_below: lim_b,
        point: lim_a - lim_b,
        se: (va + vb).sqrt(),
        conventional_point: conv_a - conv_b,
        conventional_se: (conv_va + conv_vb).sqrt(),
        bandwidth_main: h,
        bandwidth_bias: b,
        n_effective_above: above.n_effective,
        n_effective_below: below.n_effective,
    }
}

/// Boundary fits for every category.
pub fn fit_rd(sample: &QualSample, opts: &RdOptions) -> Result<RdFit, RdError> {
    let s = validate_sample(sample, Design::Rd)?;
    let p = prepare(&s, opts)?;
    let m_total = s.m();

    let choose = |cats: &[usize]| -> Result<f64, RdError> {
        match opts.bandwidth {
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            Bandwidth::Fixed(h) => Err(RdError::InvalidBandwidth(h)),
            Bandwidth::Auto => auto_bandwidth(&p, cats),
        }
    };

    let categories = if opts.per_category_bandwidth {
        (0..m_total)
            .map(|m| {
                let h = choose(&[m])?;
                let above = side_smoother(&p.above, h, h)?;
                let below = side_smoother(&p.below, h, h)?;
                Ok(fit_category(&p, m, h, h, &above, &below, opts.bias_correction))
            })
            .collect::<Result<Vec<_>, RdError>>()?
    } else {
        let all: Vec<usize> = (0..m_total).collect();
        let h = choose(&all)?;
        let above = side_smoother(&p.above, h, h)?;
        let below = side_smoother(&p.below, h, h)?;
        (0..m_total).map(|m| fit_category(&p, m, h, h, &above, &below, opts.bias_correction)).collect()
    };
    Ok(RdFit { kernel: "triangular", bias_corrected: opts.bias_correction, categories })
}

/// PSC estimate.
pub fn estimate_psc(sample: &QualSample, opts: &RdOptions) -> Result<ShiftEstimate, RdError> {
    let s = validate_sample(sample, Design::Rd)?;
    let fit = fit_rd(&s, opts)?;
    let points: Vec<f64> = fit.categories.iter().map(|c| c.point).collect();
    let ses: Vec<f64> = fit.categories.iter().map(|c| c.se).collect();
    let first = &fit.categories[0];
    let mut est = ShiftEstimate::from_parts(Estimand::Psc, &s.labels(), &points, &ses, opts.alpha)?
        .with_diagnostic("cutoff", s.cutoff().expect("validated"))
        .with_diagnostic("bias_corrected", if fit.bias_corrected { 1.0 } else { 0.0 })
        .with_diagnostic("n", s.len() as f64);
    if opts.per_category_bandwidth {
        for (m, c) in fit.categories.iter().enumerate() {
            est.diagnostics.insert(format!("bandwidth_main_{}", m + 1), c.bandwidth_main);
            est.diagnostics.insert(format!("bandwidth_bias_{}", m + 1), c.bandwidth_bias);
        }
    } else {
        est.diagnostics.insert("bandwidth_main".into(), first.bandwidth_main);
        est.diagnostics.insert("bandwidth_bias".into(), first.bandwidth_bias);
        est.diagnostics.insert("n_effective_above".into(), first.n_effective_above as f64);
        est.diagnostics.insert("n_effective_below".into(), first.n_effective_below as f64);
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbors_exclude_self_and_prefer_closest() {
        let u = [0.0, 0.1, 0.15, 0.5, 0.55];
        assert_eq!(nearest_neighbors(&u, 1, 3), vec![2, 0, 3]);
        assert_eq!(nearest_neighbors(&u, 0, 2), vec![1, 2]);
    }

    #[test]
    fn local_linear_weights_reproduce_lines() {
        let u: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let w = local_poly_weights(&u, 0.5, 1, 0).unwrap();
        let intercept: f64 = w.iter().zip(&u).map(|(w, u)| w * (0.3 + 2.0 * u)).sum();
        assert!((intercept - 0.3).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let v = local_poly_weights(&u, 0.5, 2, 2).unwrap();
        let quad: f64 = v.iter().zip(&u).map(|(v, u)| v * (1.0 - u + 4.0 * u * u)).sum();
        assert!((quad - 4.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_units_above() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let d: Vec<u8> = x.iter().map(|&v| u8::from(v >= 0.9)).collect();
        let y: Vec<i64> = (0..20).map(|i| (i % 2) as i64 + 1).collect();
        let s = QualSample::new(y, d).with_running_var(x).with_cutoff(0.9);
        assert_eq!(
            estimate_psc(&s, &RdOptions::default()),
            Err(RdError::InsufficientLocalData(Side::Above))
        );
    }
}
