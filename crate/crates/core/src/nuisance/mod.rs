//! Nuisance functions for selection-on-observables estimation: conditional
//! class probabilities `p_m(d, x)`, the propensity score `e(x)`, and the
//! cross-fitting machinery that produces out-of-fold predictions for them.
//!
//! Learners plug in through [`NuisanceLearner`]; [`LogitLearner`] is the
//! built-in parametric choice.

mod folds;
mod logit;

use rayon::prelude::*;
use thiserror::Error;

use crate::sample::{validate_sample, Covariates, Design, QualSample, ValidationError};

pub use folds::{make_folds, FoldError, FoldPlan, DEFAULT_FOLDS, DEFAULT_MAX_ATTEMPTS};
pub use logit::{
    fit_logit, fit_multinomial_logit, multinomial_log_likelihood, multinomial_score, ClassProbModel, FitError,
    FitInfo, NewtonOptions, PropensityModel,
};

/// Predicts the `M` class probabilities at a covariate row.
pub trait ClassProbPredictor: Send + Sync {
    fn n_categories(&self) -> usize;
    fn predict_into(&self, x: &[f64], out: &mut [f64]);
}

pub trait PropensityPredictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

impl ClassProbPredictor for ClassProbModel {
    fn n_categories(&self) -> usize {
        ClassProbModel::n_categories(self)
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        ClassProbModel::predict_into(self, x, out)
    }
}

impl PropensityPredictor for PropensityModel {
    fn predict(&self, x: &[f64]) -> f64 {
        PropensityModel::predict(self, x)
    }
}

/// A procedure that fits both nuisance functions from training data.
pub trait NuisanceLearner: Sync {
    /// `y` holds zero-based categories in `0..m`.
    fn fit_class_probs(&self, x: &Covariates, y: &[usize], m: usize) -> Result<Box<dyn ClassProbPredictor>, FitError>;
    fn fit_propensity(&self, x: &Covariates, d: &[u8]) -> Result<Box<dyn PropensityPredictor>, FitError>;
}

/// Ridge-penalized multinomial logit for class probabilities, binary logit for
/// the propensity score.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogitLearner {
    pub newton: NewtonOptions,
}

impl LogitLearner {
    pub fn with_ridge(ridge: f64) -> Self {
        Self { newton: NewtonOptions::with_ridge(ridge) }
    }
}

impl NuisanceLearner for LogitLearner {
    fn fit_class_probs(&self, x: &Covariates, y: &[usize], m: usize) -> Result<Box<dyn ClassProbPredictor>, FitError> {
        Ok(Box::new(fit_multinomial_logit(x, y, m, &self.newton)?))
    }

    fn fit_propensity(&self, x: &Covariates, d: &[u8]) -> Result<Box<dyn PropensityPredictor>, FitError> {
        Ok(Box::new(fit_logit(x, d, &self.newton)?))
    }
}

/// Per-unit nuisance values: `treated[i*M + m] = p̂_m(1, X_i)`,
/// `control[i*M + m] = p̂_m(0, X_i)`, `propensity[i] = ê(X_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisancePredictions {
    pub n_categories: usize,
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
    pub propensity: Vec<f64>,
}

impl NuisancePredictions {
    pub fn len(&self) -> usize {
        self.propensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.propensity.is_empty()
    }

    pub fn treated_row(&self, i: usize) -> &[f64] {
        &self.treated[i * self.n_categories..(i + 1) * self.n_categories]
    }

    pub fn control_row(&self, i: usize) -> &[f64] {
        &self.control[i * self.n_categories..(i + 1) * self.n_categories]
    }

    /// Clamps the propensity into `[low, high]`; returns how many units moved.
    pub fn clip_propensity(&mut self, low: f64, high: f64) -> usize {
        let mut clipped = 0;
        for e in &mut self.propensity {
            let c = e.clamp(low, high);
            if c != *e {
                clipped += 1;
                *e = c;
            }
        }
        clipped
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NuisanceError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Fold(#[from] FoldError),
    #[error("fold {fold}: fitting {what} failed: {source}")]
    Fit { fold: usize, what: &'static str, source: FitError },
}

/// Out-of-fold predictions together with the plan that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFit {
    pub predictions: NuisancePredictions,
    pub folds: FoldPlan,
}

/// K-fold cross-fitting with the built-in logit learners.
pub fn cross_fit_nuisances(sample: &QualSample, k: usize, seed: u64) -> Result<CrossFit, NuisanceError> {
    cross_fit_with(sample, k, seed, DEFAULT_MAX_ATTEMPTS, &LogitLearner::default())
}

/// K-fold cross-fitting: units in fold `f` are predicted only by models
/// trained on the other folds. Class-probability models are trained
/// separately on treated and control units.
pub fn cross_fit_with(
    sample: &QualSample,
    k: usize,
    seed: u64,
    max_attempts: usize,
    learner: &dyn NuisanceLearner,
) -> Result<CrossFit, NuisanceError> {
    let validated = validate_sample(sample, Design::Soo)?;
    let sample = &validated;
    let folds = make_folds(sample, k, seed, max_attempts)?;
    let m = sample.m();
    let n = sample.len();

    let per_fold: Vec<Result<FoldPredictions, NuisanceError>> =
        (0..k).into_par_iter().map(|f| fit_fold(sample, &folds, f, learner)).collect();

    let mut predictions = NuisancePredictions {
        n_categories: m,
        treated: vec![0.0; n * m],
        control: vec![0.0; n * m],
        propensity: vec![0.0; n],
    };
    for fold in per_fold {
        let fold = fold?;
        for (j, &i) in fold.members.iter().enumerate() {
            predictions.treated[i * m..(i + 1) * m].copy_from_slice(&fold.treated[j * m..(j + 1) * m]);
            predictions.control[i * m..(i + 1) * m].copy_from_slice(&fold.control[j * m..(j + 1) * m]);
            predictions.propensity[i] = fold.propensity[j];
        }
    }
    Ok(CrossFit { predictions, folds })
}

struct FoldPredictions {
    members: Vec<usize>,
    treated: Vec<f64>,
    control: Vec<f64>,
    propensity: Vec<f64>,
}

fn fit_fold(
    sample: &QualSample,
    folds: &FoldPlan,
    fold: usize,
    learner: &dyn NuisanceLearner,
) -> Result<FoldPredictions, NuisanceError> {
    let m = sample.m();
    let x = sample.covariates();
    let train = folds.complement(fold);
    let members = folds.members(fold);

    let fit_arm = |arm: u8| {
        let rows: Vec<usize> = train.iter().copied().filter(|&i| sample.treatment()[i] == arm).collect();
        let y: Vec<usize> = rows.iter().map(|&i| sample.category(i)).collect();
        learner
            .fit_class_probs(&x.select_rows(&rows), &y, m)
            .map_err(|source| NuisanceError::Fit { fold, what: if arm == 1 { "treated class probabilities" } else { "control class probabilities" }, source })
    };
    let treated_model = fit_arm(1)?;
    let control_model = fit_arm(0)?;
    let d: Vec<u8> = train.iter().map(|&i| sample.treatment()[i]).collect();
    let prop_model = learner
        .fit_propensity(&x.select_rows(&train), &d)
        .map_err(|source| NuisanceError::Fit { fold, what: "propensity score", source })?;

    let mut treated = vec![0.0; members.len() * m];
    let mut control = vec![0.0; members.len() * m];
    let mut propensity = vec![0.0; members.len()];
    for (j, &i) in members.iter().enumerate() {
        let xi = x.row(i);
        treated_model.predict_into(xi, &mut treated[j * m..(j + 1) * m]);
        control_model.predict_into(xi, &mut control[j * m..(j + 1) * m]);
        propensity[j] = prop_model.predict(xi);
    }
    Ok(FoldPredictions { members, treated, control, propensity })
}

/// Nuisance models fitted on the full sample, used for point-wise readouts.
pub(crate) struct FullSampleModels {
    pub(crate) treated: ClassProbModel,
    pub(crate) control: ClassProbModel,
}

/// Fits treated and control class-probability models on every unit.
pub(crate) fn fit_full_sample(sample: &QualSample, opts: &NewtonOptions) -> Result<FullSampleModels, FitError> {
    let m = sample.m();
    let x = sample.covariates();
    let fit_arm = |arm: u8| {
        let rows: Vec<usize> = (0..sample.len()).filter(|&i| sample.treatment()[i] == arm).collect();
        let y: Vec<usize> = rows.iter().map(|&i| sample.category(i)).collect();
        let mut model = fit_multinomial_logit(&x.select_rows(&rows), &y, m, opts)?;
        model.set_arm(arm);
        Ok(model)
    };
    Ok(FullSampleModels { treated: fit_arm(1)?, control: fit_arm(0)? })
}
