//! Cross-fitting partitions.
//!
//! A plan is accepted only if every fold contains every outcome category in
//! both treatment arms. Balanced random partitions are re-drawn from one
//! seeded stream until that holds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sample::QualSample;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FoldError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("sample has not been validated")]
    Unvalidated,
    #[error("no partition with every category in every fold and arm after {attempts} attempts")]
    GuaranteeUnsatisfiable { attempts: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
    seed: u64,
    attempts_used: usize,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Fold index of each unit.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn attempts_used(&self) -> usize {
        self.attempts_used
    }

    /// Units assigned to `fold`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Units outside `fold`, i.e. its training set.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Draws a fold plan for a validated sample.
pub fn make_folds(sample: &QualSample, k: usize, seed: u64, max_attempts: usize) -> Result<FoldPlan, FoldError> {
    if k < 2 {
        return Err(FoldError::TooFewFolds(k));
    }
    let n = sample.len();
    let m = sample.n_categories().ok_or(FoldError::Unvalidated)?;

    // A category/arm cell with fewer than k units can never be spread over k folds.
    let mut cell_totals = vec![0usize; 2 * m];
    for i in 0..n {
        cell_totals[sample.treatment()[i] as usize * m + sample.category(i)] += 1;
    }
    if n < 2 * k * m || cell_totals.iter().any(|&c| c < k) {
        return Err(FoldError::GuaranteeUnsatisfiable { attempts: 0 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut assignment = vec![0usize; n];
    let mut seen = vec![false; k * 2 * m];
    for attempt in 1..=max_attempts {
        order.shuffle(&mut rng);
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % k;
        }
        seen.iter_mut().for_each(|s| *s = false);
        for (i, &f) in assignment.iter().enumerate() {
            let cell = (f * 2 + sample.treatment()[i] as usize) * m + sample.category(i);
            seen[cell] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok(FoldPlan { k, assignment, seed, attempts_used: attempt });
        }
    }
    Err(FoldError::GuaranteeUnsatisfiable { attempts: max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{validate_sample, Design};

    fn sample(n: usize) -> QualSample {
        let y = (0..n).map(|i| (i % 3) as i64 + 1).collect();
        let d = (0..n).map(|i| ((i / 3) % 2) as u8).collect();
        validate_sample(&QualSample::new(y, d), Design::Soo).unwrap()
    }

    #[test]
    fn large_sample_gets_valid_balanced_plan() {
        let s = sample(2000);
        let plan = make_folds(&s, 5, 42, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert!(plan.attempts_used() >= 1);
        let sizes: Vec<usize> = (0..5).map(|f| plan.members(f).len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(sizes.iter().sum::<usize>(), 2000);
    }

    #[test]
    fn same_seed_same_plan() {
        let s = sample(600);
        assert_eq!(make_folds(&s, 5, 9, 1000).unwrap(), make_folds(&s, 5, 9, 1000).unwrap());
        assert_ne!(make_folds(&s, 5, 9, 1000).unwrap().assignment(), make_folds(&s, 5, 10, 1000).unwrap().assignment());
    }

    #[test]
    fn singleton_category_is_unsatisfiable() {
        let mut y: Vec<i64> = (0..200).map(|i| (i % 2) as i64 + 1).collect();
        y[0] = 3;
        let d = (0..200).map(|i| ((i / 2) % 2) as u8).collect();
        let s = validate_sample(&QualSample::new(y, d), Design::Soo).unwrap();
        assert!(matches!(make_folds(&s, 5, 1, 1000), Err(FoldError::GuaranteeUnsatisfiable { .. })));
    }

    #[test]
    fn rejects_single_fold() {
        assert_eq!(make_folds(&sample(60), 1, 0, 10), Err(FoldError::TooFewFolds(1)));
    }
}
