//! Ridge-penalized multinomial and binary logistic regression by Newton's method.
//!
//! Category `M` is the reference class, so a model with `M` categories and `p`
//! covariates carries an `(M−1) × (p+1)` coefficient matrix whose first column
//! holds the intercepts. The ridge penalty `ridge/2 · ‖β‖²` applies to slopes
//! only.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::sample::Covariates;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("Newton iteration did not converge after {iterations} iterations (separation)")]
    Separation { iterations: usize },
    #[error("Hessian is singular even with ridge {ridge}")]
    SingularHessian { ridge: f64 },
    #[error("{n} observations cannot identify {params} parameters")]
    TooFewObservations { n: usize, params: usize },
    #[error("need at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("category {0} does not occur in the training data")]
    EmptyCategory(usize),
    #[error("treatment arm D={0} has no units")]
    EmptyArm(u8),
    #[error("ridge must be finite and non-negative, got {0}")]
    InvalidRidge(f64),
}

/// Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub ridge: f64,
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the penalized score.
    pub score_tol: f64,
    pub max_halvings: usize,
    /// Largest ridge tried when the Hessian is singular.
    pub max_ridge: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { ridge: 1e-6, max_iter: 100, score_tol: 1e-8, max_halvings: 30, max_ridge: 1e-2 }
    }
}

impl NewtonOptions {
    pub fn with_ridge(ridge: f64) -> Self {
        Self { ridge, ..Self::default() }
    }
}

/// Convergence record of a Newton fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitInfo {
    pub iterations: usize,
    /// Penalized log-likelihood after each accepted step, starting value first.
    pub objective_trace: Vec<f64>,
    pub max_abs_score: f64,
    pub ridge_used: f64,
}

/// Fitted conditional class probabilities `p_m(d, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbModel {
    coef: DMatrix<f64>,
    // same coefficients, class-major
    theta: Vec<f64>,
    arm: Option<u8>,
    info: FitInfo,
}

impl ClassProbModel {
    pub fn n_categories(&self) -> usize {
        self.coef.nrows() + 1
    }

    pub fn n_covariates(&self) -> usize {
        self.coef.ncols() - 1
    }

    /// Coefficients, one row per non-reference category, intercept first.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coef
    }

    pub fn arm(&self) -> Option<u8> {
        self.arm
    }

    pub fn set_arm(&mut self, arm: u8) {
        self.arm = Some(arm);
    }

    pub fn info(&self) -> &FitInfo {
        &self.info
    }

    /// Writes the `M` class probabilities at `x` into `out`.
    pub fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        softmax_into(&self.theta, self.n_covariates(), x, out);
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_categories()];
        self.predict_into(x, &mut out);
        out
    }

    /// `{"arm": d, "coef": [[...], ...]}`, for debugging dumps.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.coef.nrows())
            .map(|k| self.coef.row(k).iter().copied().collect())
            .collect();
        serde_json::json!({ "arm": self.arm, "coef": rows })
    }
}

/// Fitted propensity score `e(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    coef: Vec<f64>,
    info: FitInfo,
}

impl PropensityModel {
    /// Intercept first, then one slope per covariate.
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn info(&self) -> &FitInfo {
        &self.info
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.coef[0] + self.coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        1.0 / (1.0 + (-eta).exp())
    }
}

// `theta` is laid out class-major: (p+1) entries per non-reference class.
#[inline]
fn softmax_into(theta: &[f64], p: usize, x: &[f64], out: &mut [f64]) {
    let k_free = out.len() - 1;
    let mut mx = 0.0f64;
    for k in 0..k_free {
        let t = &theta[k * (p + 1)..(k + 1) * (p + 1)];
        let eta = t[0] + t[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        out[k] = eta;
        mx = mx.max(eta);
    }
    let mut denom = (-mx).exp();
    for v in out[..k_free].iter_mut() {
        *v = (*v - mx).exp();
        denom += *v;
    }
    for v in out[..k_free].iter_mut() {
        *v /= denom;
    }
    out[k_free] = (-mx).exp() / denom;
}

/// Penalized multinomial log-likelihood at `theta` (class-major layout).
///
/// `y` holds zero-based categories in `0..m`.
pub fn multinomial_log_likelihood(x: &Covariates, y: &[usize], m: usize, ridge: f64, theta: &[f64]) -> f64 {
    let p = x.n_cols();
    let mut ll = 0.0;
    let mut eta = vec![0.0; m];
    for (i, &yi) in y.iter().enumerate() {
        let xi = x.row(i);
        let mut mx = 0.0f64;
        for k in 0..m - 1 {
            let t = &theta[k * (p + 1)..(k + 1) * (p + 1)];
            eta[k] = t[0] + t[1..].iter().zip(xi).map(|(b, v)| b * v).sum::<f64>();
            mx = mx.max(eta[k]);
        }
        eta[m - 1] = 0.0;
        let lse = mx + eta.iter().map(|e| (e - mx).exp()).sum::<f64>().ln();
        ll += eta[yi] - lse;
    }
    ll - 0.5 * ridge * penalty_sq(theta, p)
}

fn penalty_sq(theta: &[f64], p: usize) -> f64 {
    theta
        .chunks(p + 1)
        .map(|t| t[1..].iter().map(|b| b * b).sum::<f64>())
        .sum()
}

/// Gradient of [`multinomial_log_likelihood`] with respect to `theta`.
pub fn multinomial_score(x: &Covariates, y: &[usize], m: usize, ridge: f64, theta: &[f64]) -> Vec<f64> {
    let p = x.n_cols();
    let mut g = vec![0.0; theta.len()];
    let mut probs = vec![0.0; m];
    for (i, &yi) in y.iter().enumerate() {
        let xi = x.row(i);
        softmax_into(theta, p, xi, &mut probs);
        for k in 0..m - 1 {
            let r = if yi == k { 1.0 } else { 0.0 } - probs[k];
            let gk = &mut g[k * (p + 1)..(k + 1) * (p + 1)];
            gk[0] += r;
            for (gj, v) in gk[1..].iter_mut().zip(xi) {
                *gj += r * v;
            }
        }
    }
    for (k, t) in theta.chunks(p + 1).enumerate() {
        for j in 1..=p {
            g[k * (p + 1) + j] -= ridge * t[j];
        }
    }
    g
}

// Negative Hessian of the penalized log-likelihood.
fn neg_hessian(x: &Covariates, m: usize, ridge: f64, theta: &[f64]) -> DMatrix<f64> {
    let p = x.n_cols();
    let q = p + 1;
    let dim = (m - 1) * q;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut probs = vec![0.0; m];
    let mut z = vec![0.0; q];
    for i in 0..x.n_rows() {
        let xi = x.row(i);
        softmax_into(theta, p, xi, &mut probs);
        z[0] = 1.0;
        z[1..].copy_from_slice(xi);
        for k in 0..m - 1 {
            for l in k..m - 1 {
                let w = if k == l { probs[k] * (1.0 - probs[k]) } else { -probs[k] * probs[l] };
                for a in 0..q {
                    let wa = w * z[a];
                    for b in 0..q {
                        h[(k * q + a, l * q + b)] += wa * z[b];
                    }
                }
            }
        }
    }
    // mirror the upper block triangle
    for k in 0..m - 1 {
        for l in 0..k {
            for a in 0..q {
                for b in 0..q {
                    h[(k * q + a, l * q + b)] = h[(l * q + b, k * q + a)];
                }
            }
        }
    }
    for k in 0..m - 1 {
        for j in 1..q {
            h[(k * q + j, k * q + j)] += ridge;
        }
    }
    h
}

enum NewtonOutcome {
    Fitted(Vec<f64>, FitInfo),
    Singular,
}

fn newton(x: &Covariates, y: &[usize], m: usize, opts: &NewtonOptions, ridge: f64) -> Result<NewtonOutcome, FitError> {
    let p = x.n_cols();
    let q = p + 1;
    let n = y.len();

    // Start from the intercept-only solution.
    let mut counts = vec![0usize; m];
    for &yi in y {
        counts[yi] += 1;
    }
    let mut theta = vec![0.0; (m - 1) * q];
    for k in 0..m - 1 {
        theta[k * q] = (counts[k] as f64 / counts[m - 1] as f64).ln();
    }

    let mut obj = multinomial_log_likelihood(x, y, m, ridge, &theta);
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut score = multinomial_score(x, y, m, ridge, &theta);
    let mut max_score = score.iter().fold(0.0f64, |a, g| a.max(g.abs()));

    while max_score >= opts.score_tol {
        if iterations == opts.max_iter {
            return Err(FitError::Separation { iterations });
        }
        iterations += 1;
        let h = neg_hessian(x, m, ridge, &theta);
        let chol = match h.cholesky() {
            Some(c) => c,
            None => return Ok(NewtonOutcome::Singular),
        };
        let step = chol.solve(&DVector::from_column_slice(&score));
        if step.iter().any(|s| !s.is_finite()) {
            return Ok(NewtonOutcome::Singular);
        }

        // Near the optimum the objective's change drowns in rounding error,
        // so ascent is only demanded up to a few ulps of the objective.
        let slack = 64.0 * f64::EPSILON * (1.0 + obj.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let v = multinomial_log_likelihood(x, y, m, ridge, &cand);
            if v >= obj - slack {
                accepted = Some((cand, v));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, v)) => {
                theta = cand;
                obj = v;
                trace.push(obj);
                score = multinomial_score(x, y, m, ridge, &theta);
                max_score = score.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            }
            // No ascent along the Newton direction: at the floating-point optimum.
            None => break,
        }
    }
    if max_score >= opts.score_tol {
        return Err(FitError::Separation { iterations });
    }

    // Complete separation: every unit is fitted to its own class.
    let mut probs = vec![0.0; m];
    let separated = (0..n).all(|i| {
        softmax_into(&theta, p, x.row(i), &mut probs);
        probs[y[i]] > 1.0 - 1e-6
    });
    if separated {
        return Err(FitError::Separation { iterations });
    }

    Ok(NewtonOutcome::Fitted(
        theta,
        FitInfo { iterations, objective_trace: trace, max_abs_score: max_score, ridge_used: ridge },
    ))
}

fn fit_theta(x: &Covariates, y: &[usize], m: usize, opts: &NewtonOptions) -> Result<(Vec<f64>, FitInfo), FitError> {
    if !(opts.ridge >= 0.0 && opts.ridge.is_finite()) {
        return Err(FitError::InvalidRidge(opts.ridge));
    }
    if m < 2 {
        return Err(FitError::TooFewCategories(m));
    }
    let p = x.n_cols();
    if y.len() <= p + 1 {
        return Err(FitError::TooFewObservations { n: y.len(), params: p + 1 });
    }
    let mut present = vec![false; m];
    for &yi in y {
        present[yi] = true;
    }
    if let Some(k) = present.iter().position(|p| !p) {
        return Err(FitError::EmptyCategory(k + 1));
    }

    let mut ridge = opts.ridge;
    loop {
        match newton(x, y, m, opts, ridge)? {
            NewtonOutcome::Fitted(theta, info) => return Ok((theta, info)),
            NewtonOutcome::Singular => {
                let next = if ridge == 0.0 { 1e-6 } else { ridge * 10.0 };
                if next > opts.max_ridge * (1.0 + 1e-12) {
                    return Err(FitError::SingularHessian { ridge });
                }
                ridge = next;
            }
        }
    }
}

/// Fits a multinomial logit of `y` (zero-based categories in `0..m`) on `x`.
pub fn fit_multinomial_logit(
    x: &Covariates,
    y: &[usize],
    m: usize,
    opts: &NewtonOptions,
) -> Result<ClassProbModel, FitError> {
    let (theta, info) = fit_theta(x, y, m, opts)?;
    let q = x.n_cols() + 1;
    let coef = DMatrix::from_row_slice(m - 1, q, &theta);
    Ok(ClassProbModel { coef, theta, arm: None, info })
}

/// Fits a binary logit of treatment `d` on `x`.
pub fn fit_logit(x: &Covariates, d: &[u8], opts: &NewtonOptions) -> Result<PropensityModel, FitError> {
    for arm in [0u8, 1] {
        if !d.contains(&arm) {
            return Err(FitError::EmptyArm(arm));
        }
    }
    // Class 0 is "treated" so the free row models P(D = 1).
    let y: Vec<usize> = d.iter().map(|&v| if v == 1 { 0 } else { 1 }).collect();
    let (theta, info) = fit_theta(x, &y, 2, opts)?;
    Ok(PropensityModel { coef: theta, info })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn draw_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        probs.len() - 1
    }

    #[test]
    fn recovers_known_multinomial_coefficients() {
        // Oracle: simulate from known coefficients; MLE is consistent.
        let truth = [0.5, 1.0, -0.8, -0.3, -0.6, 0.9];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut probs = [0.0; 3];
        for _ in 0..n {
            let x = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            softmax_into(&truth, 2, &x, &mut probs);
            y.push(draw_categorical(&mut rng, &probs));
            rows.push(x);
        }
        let x = Covariates::from_rows(&rows);
        let model = fit_multinomial_logit(&x, &y, 3, &NewtonOptions::default()).unwrap();
        for (est, tru) in model.coefficients().transpose().iter().zip(truth) {
            assert!((est - tru).abs() < 0.1, "est {est} truth {tru}");
        }
        assert!(model.info().max_abs_score < 1e-8);
    }

    #[test]
    fn zero_covariates_give_sample_frequencies() {
        let y = vec![0, 0, 1, 2, 2, 2, 1, 0, 2, 2];
        let x = Covariates::zeros(y.len(), 2);
        let model = fit_multinomial_logit(&x, &y, 3, &NewtonOptions::default()).unwrap();
        let p = model.predict(&[0.0, 0.0]);
        for (pk, want) in p.iter().zip([0.3, 0.2, 0.5]) {
            assert!((pk - want).abs() < 1e-10);
        }
        assert!(model.coefficients().column(1).amax() < 1e-12);
    }

    #[test]
    fn separated_data_needs_ridge() {
        let x = Covariates::from_rows(&[[-2.0], [-1.0], [1.0], [2.0]]);
        let y = vec![1, 1, 0, 0];
        let err = fit_multinomial_logit(&x, &y, 2, &NewtonOptions::with_ridge(0.0)).unwrap_err();
        assert!(matches!(err, FitError::Separation { .. }), "{err:?}");
        let model = fit_multinomial_logit(&x, &y, 2, &NewtonOptions::with_ridge(1e-4)).unwrap();
        assert!(model.info().max_abs_score < 1e-8);
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<[f64; 2]> = (0..300).map(|_| [rng.random(), rng.random()]).collect();
        let y: Vec<usize> = rows.iter().map(|r| if r[0] + 0.3 * rng.random::<f64>() > 0.6 { 0 } else if r[1] > 0.5 { 1 } else { 2 }).collect();
        let model = fit_multinomial_logit(&Covariates::from_rows(&rows), &y, 3, &NewtonOptions::default()).unwrap();
        let trace = &model.info().objective_trace;
        assert!(trace.len() >= 2);
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
    }

    #[test]
    fn predictions_are_normalized() {
        let theta = vec![30.0, -2.0, 1.0, -40.0, 3.0, 0.5, 0.1, 0.2, 0.3];
        let model = ClassProbModel {
            coef: DMatrix::from_row_slice(3, 3, &theta),
            theta,
            arm: Some(1),
            info: FitInfo { iterations: 0, objective_trace: vec![], max_abs_score: 0.0, ridge_used: 0.0 },
        };
        for x in [[0.0, 0.0], [10.0, -10.0], [-3.0, 7.0]] {
            let p = model.predict(&x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert_eq!(model.to_json()["arm"], 1);
    }

    #[test]
    fn logit_rejects_single_arm() {
        let x = Covariates::zeros(4, 1);
        assert_eq!(fit_logit(&x, &[1, 1, 1, 1], &NewtonOptions::default()), Err(FitError::EmptyArm(0)));
    }

    #[test]
    fn logit_recovers_known_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = [-0.4, 1.2, -0.7];
        let n = 10_000;
        let mut rows = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for _ in 0..n {
            let x = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            let e = 1.0 / (1.0 + (-(truth[0] + truth[1] * x[0] + truth[2] * x[1])).exp());
            d.push(u8::from(rng.random::<f64>() < e));
            rows.push(x);
        }
        let m = fit_logit(&Covariates::from_rows(&rows), &d, &NewtonOptions::default()).unwrap();
        for (est, tru) in m.coefficients().iter().zip(truth) {
            assert!((est - tru).abs() < 0.1, "est {est} truth {tru}");
        }
    }
}
