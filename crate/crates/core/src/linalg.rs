//! Small dense least-squares helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Neumaier compensated sum; order-stable enough that score means and
/// Monte Carlo aggregates do not drift with summation order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Inverse of a symmetric positive definite matrix, `None` when Cholesky fails.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.inverse())
}

/// Ordinary least squares fit with the pieces needed for sandwich variances.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(XᵀX)⁻¹`
    pub bread: DMatrix<f64>,
}

/// OLS of `y` on the columns of `x`. `None` if `XᵀX` is singular.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<OlsFit> {
    let xtx = x.transpose() * x;
    let bread = spd_inverse(&xtx)?;
    let coef = &bread * (x.transpose() * y);
    let residuals = y - x * &coef;
    Some(OlsFit { coef, residuals, bread })
}

/// Heteroskedasticity-robust (HC0) covariance `B (Σ uᵢ² xᵢxᵢᵀ) B`.
pub fn hc0_covariance(x: &DMatrix<f64>, residuals: &DVector<f64>, bread: &DMatrix<f64>) -> DMatrix<f64> {
    let k = x.ncols();
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..x.nrows() {
        let u2 = residuals[i] * residuals[i];
        for a in 0..k {
            let xa = x[(i, a)] * u2;
            for b in 0..k {
                meat[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    bread * meat * bread
}

/// Cluster-robust covariance with CR1 scaling `G/(G−1) · (n−1)/(n−k)`.
///
/// `clusters[i]` is a dense cluster index in `0..n_clusters`.
pub fn cr1_covariance(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    bread: &DMatrix<f64>,
    clusters: &[usize],
    n_clusters: usize,
) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut scores = DMatrix::<f64>::zeros(n_clusters, k);
    for i in 0..n {
        let g = clusters[i];
        for a in 0..k {
            scores[(g, a)] += x[(i, a)] * residuals[i];
        }
    }
    let meat = scores.transpose() * &scores;
    let g = n_clusters as f64;
    let scale = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    bread * meat * bread * scale
}
