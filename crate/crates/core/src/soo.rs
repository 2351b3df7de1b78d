//! Probability shifts under selection on observables.
//!
//! Each category indicator `1{Y = m}` gets a doubly robust score built from
//! cross-fitted nuisances; the PS estimate is the score mean and its variance
//! is the score variance divided by `n`.

use thiserror::Error;

use crate::estimate::{EstimateError, Estimand, ShiftEstimate};
use crate::linalg::{compensated_sum, mean};
use crate::nuisance::{
    cross_fit_with, fit_full_sample, FitError, LogitLearner, NuisanceError, NuisanceLearner, NuisancePredictions,
    DEFAULT_FOLDS, DEFAULT_MAX_ATTEMPTS,
};
use crate::sample::{validate_sample, Design, QualSample, ValidationError};

/// Propensity clipping bounds applied before scoring.
pub const PROPENSITY_CLIP: (f64, f64) = (0.01, 0.99);
/// Clipping more than this share of units adds a warning.
pub const CLIP_WARNING_SHARE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SooError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Nuisance(#[from] NuisanceError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("score of unit {unit} for category {category} is not finite")]
    NonFiniteScore { unit: usize, category: usize },
    #[error("nuisance predictions cover {got} units, sample has {expected}")]
    PredictionLength { expected: usize, got: usize },
}

/// How PST scores are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PstScore {
    /// Doubly robust score for effects on the treated.
    #[default]
    DoublyRobust,
    /// Mean over treated units of `1{Y=m} − p̂_m(0, X)`.
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SooOptions {
    pub k: usize,
    pub seed: u64,
    pub alpha: f64,
    pub clip: (f64, f64),
    pub pst_score: PstScore,
    pub ridge: f64,
    pub max_attempts: usize,
}

impl Default for SooOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_FOLDS,
            seed: 42,
            alpha: 0.05,
            clip: PROPENSITY_CLIP,
            pst_score: PstScore::DoublyRobust,
            ridge: 1e-6,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl SooOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, ..Self::default() }
    }
}

/// Score matrix `Γ`, one row per unit and one column per category.
#[derive(Debug, Clone, PartialEq)]
pub struct DrScoreTable {
    pub target: Estimand,
    pub n_categories: usize,
    pub scores: Vec<f64>,
}

impl DrScoreTable {
    pub fn n(&self) -> usize {
        self.scores.len() / self.n_categories
    }

    pub fn get(&self, i: usize, m: usize) -> f64 {
        self.scores[i * self.n_categories + m]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_categories..(i + 1) * self.n_categories]
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, m)).collect()
    }
}

fn check_lengths(sample: &QualSample, preds: &NuisancePredictions) -> Result<(), SooError> {
    if preds.len() != sample.len() {
        return Err(SooError::PredictionLength { expected: sample.len(), got: preds.len() });
    }
    Ok(())
}

/// Doubly robust PS scores
/// `Γ_im = p̂_m(1,X) − p̂_m(0,X) + D(1{Y=m} − p̂_m(1,X))/ê − (1−D)(1{Y=m} − p̂_m(0,X))/(1−ê)`.
///
/// The propensities are used as given; callers clip them first.
pub fn dr_scores(sample: &QualSample, preds: &NuisancePredictions) -> Result<DrScoreTable, SooError> {
    check_lengths(sample, preds)?;
    let m_total = preds.n_categories;
    let mut scores = vec![0.0; sample.len() * m_total];
    for i in 0..sample.len() {
        let d = f64::from(sample.treatment()[i]);
        let e = preds.propensity[i];
        let y = sample.category(i);
        let p1 = preds.treated_row(i);
        let p0 = preds.control_row(i);
        for m in 0..m_total {
            let ind = if y == m { 1.0 } else { 0.0 };
            let g = p1[m] - p0[m] + d * (ind - p1[m]) / e - (1.0 - d) * (ind - p0[m]) / (1.0 - e);
            if !g.is_finite() {
                return Err(SooError::NonFiniteScore { unit: i, category: m + 1 });
            }
            scores[i * m_total + m] = g;
        }
    }
    Ok(DrScoreTable { target: Estimand::Ps, n_categories: m_total, scores })
}

/// Doubly robust PST scores
/// `Γᵀ_im = (D/ρ̂)(1{Y=m} − p̂_m(0,X)) − ((1−D)/ρ̂)(ê/(1−ê))(1{Y=m} − p̂_m(0,X))`,
/// with `ρ̂` the treated share.
pub fn dr_scores_treated(sample: &QualSample, preds: &NuisancePredictions) -> Result<DrScoreTable, SooError> {
    check_lengths(sample, preds)?;
    let m_total = preds.n_categories;
    let rho = treated_share(sample);
    let mut scores = vec![0.0; sample.len() * m_total];
    for i in 0..sample.len() {
        let d = f64::from(sample.treatment()[i]);
        let e = preds.propensity[i];
        let y = sample.category(i);
        let p0 = preds.control_row(i);
        for m in 0..m_total {
            let resid = if y == m { 1.0 } else { 0.0 } - p0[m];
            let g = d / rho * resid - (1.0 - d) / rho * (e / (1.0 - e)) * resid;
            if !g.is_finite() {
                return Err(SooError::NonFiniteScore { unit: i, category: m + 1 });
            }
            scores[i * m_total + m] = g;
        }
    }
    Ok(DrScoreTable { target: Estimand::Pst, n_categories: m_total, scores })
}

fn treated_share(sample: &QualSample) -> f64 {
    sample.treatment().iter().filter(|&&d| d == 1).count() as f64 / sample.len() as f64
}

/// `(point, se)` with `point = mean(Γ)` and `se² = (1/n) · mean((Γ − point)²)`.
pub fn score_mean_and_se(column: &[f64]) -> (f64, f64) {
    let n = column.len() as f64;
    let point = mean(column);
    let var = compensated_sum(column.iter().map(|g| (g - point) * (g - point))) / n;
    (point, (var / n).sqrt())
}

struct Prepared {
    sample: QualSample,
    preds: NuisancePredictions,
    clipped: usize,
    attempts: usize,
}

fn prepare(sample: &QualSample, opts: &SooOptions, learner: &dyn NuisanceLearner) -> Result<Prepared, SooError> {
    let sample = validate_sample(sample, Design::Soo)?;
    let fit = cross_fit_with(&sample, opts.k, opts.seed, opts.max_attempts, learner)?;
    let mut preds = fit.predictions;
    let clipped = preds.clip_propensity(opts.clip.0, opts.clip.1);
    Ok(Prepared { sample, preds, clipped, attempts: fit.folds.attempts_used() })
}

fn finish(
    estimate: ShiftEstimate,
    prepared: &Prepared,
    opts: &SooOptions,
) -> ShiftEstimate {
    let n = prepared.sample.len() as f64;
    let rate = prepared.clipped as f64 / n;
    let mut out = estimate
        .with_diagnostic("folds", opts.k as f64)
        .with_diagnostic("seed", opts.seed as f64)
        .with_diagnostic("fold_attempts", prepared.attempts as f64)
        .with_diagnostic("clipping_rate", rate)
        .with_diagnostic("n", n);
    if rate > CLIP_WARNING_SHARE {
        out.warn(format!(
            "propensity clipped to [{}, {}] for {:.1}% of units; common support may be violated",
            opts.clip.0,
            opts.clip.1,
            100.0 * rate
        ));
    }
    out
}

/// PS estimate with the built-in logit nuisances.
pub fn estimate_ps(sample: &QualSample, opts: &SooOptions) -> Result<ShiftEstimate, SooError> {
    estimate_ps_with(sample, opts, &LogitLearner::with_ridge(opts.ridge))
}

pub fn estimate_ps_with(
    sample: &QualSample,
    opts: &SooOptions,
    learner: &dyn NuisanceLearner,
) -> Result<ShiftEstimate, SooError> {
    let prepared = prepare(sample, opts, learner)?;
    let table = dr_scores(&prepared.sample, &prepared.preds)?;
    let (points, ses): (Vec<f64>, Vec<f64>) =
        (0..table.n_categories).map(|m| score_mean_and_se(&table.column(m))).unzip();
    let est = ShiftEstimate::from_parts(Estimand::Ps, &prepared.sample.labels(), &points, &ses, opts.alpha)?;
    Ok(finish(est, &prepared, opts))
}

/// PST estimate with the built-in logit nuisances.
pub fn estimate_pst(sample: &QualSample, opts: &SooOptions) -> Result<ShiftEstimate, SooError> {
    estimate_pst_with(sample, opts, &LogitLearner::with_ridge(opts.ridge))
}

pub fn estimate_pst_with(
    sample: &QualSample,
    opts: &SooOptions,
    learner: &dyn NuisanceLearner,
) -> Result<ShiftEstimate, SooError> {
    let prepared = prepare(sample, opts, learner)?;
    let s = &prepared.sample;
    let m_total = s.m();
    let (points, ses): (Vec<f64>, Vec<f64>) = match opts.pst_score {
        PstScore::DoublyRobust => {
            let table = dr_scores_treated(s, &prepared.preds)?;
            let rho = treated_share(s);
            let n = s.len() as f64;
            (0..m_total)
                .map(|m| {
                    let col = table.column(m);
                    let point = mean(&col);
                    // Influence function of the ratio estimator: Γᵀ − (D/ρ̂)·point.
                    let ss = compensated_sum(col.iter().zip(s.treatment()).map(|(g, &d)| {
                        let psi = g - f64::from(d) / rho * point;
                        psi * psi
                    }));
                    (point, (ss / n).sqrt() / n.sqrt())
                })
                .unzip()
        }
        PstScore::PlugIn => {
            let treated: Vec<usize> = (0..s.len()).filter(|&i| s.is_treated(i)).collect();
            (0..m_total)
                .map(|m| {
                    let col: Vec<f64> = treated
                        .iter()
                        .map(|&i| if s.category(i) == m { 1.0 } else { 0.0 } - prepared.preds.control_row(i)[m])
                        .collect();
                    score_mean_and_se(&col)
                })
                .unzip()
        }
    };
    let est = ShiftEstimate::from_parts(Estimand::Pst, &s.labels(), &points, &ses, opts.alpha)?;
    let mut est = finish(est, &prepared, opts);
    if opts.pst_score == PstScore::PlugIn {
        est.diagnostics.insert("pst_plugin".into(), 1.0);
    }
    Ok(est)
}

/// Conditional shift at `x`: `p̂_m(1, x) − p̂_m(0, x)` from full-sample fits.
/// A point readout only; no inference is attached.
pub fn conditional_shift(sample: &QualSample, x: &[f64], ridge: f64) -> Result<Vec<f64>, SooError> {
    let sample = validate_sample(sample, Design::Soo)?;
    let models = fit_full_sample(&sample, &crate::nuisance::NewtonOptions::with_ridge(ridge))?;
    let p1 = models.treated.predict(x);
    let p0 = models.control.predict(x);
    Ok(p1.iter().zip(&p0).map(|(a, b)| a - b).collect())
}
