//! Monte Carlo ground truth for every simulated estimand.
//!
//! Covariates are drawn from their design distribution; outcome and
//! compliance randomness is integrated out exactly given `X`, so each draw
//! contributes `w(X) · (p(1, X) − p(0, X))` where the weight `w` selects the
//! target population (everyone, the treated, compliers, or units at the cutoff).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::{class_probs, derive_seed, DgpDesign, DgpSpec, N_CATEGORIES, RD_CUTOFF};
use crate::estimate::Estimand;

pub const DEFAULT_TRUTH_DRAWS: usize = 1_000_000;

// Keeps oracle draws independent of the sample streams.
const TRUTH_STREAM: u64 = 0x0074_7275_7468;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TruthError {
    #[error("{estimand} is not defined for the {design} design")]
    Unsupported { design: &'static str, estimand: Estimand },
    #[error("need at least 2 oracle draws")]
    TooFewDraws,
}

/// Oracle value and its Monte Carlo standard error, per category.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueShift {
    pub estimand: Estimand,
    pub values: Vec<f64>,
    pub mc_se: Vec<f64>,
    pub draws: usize,
}

fn weight(spec: &DgpSpec, estimand: Estimand, x: &[f64]) -> Option<f64> {
    match (spec.design, estimand) {
        (DgpDesign::SooRandomized | DgpDesign::SooObservational, Estimand::Ps) => Some(1.0),
        (DgpDesign::SooRandomized | DgpDesign::SooObservational | DgpDesign::Did, Estimand::Pst) => {
            Some(spec.propensity(x, 0))
        }
        // P(complier | X) = P(e(X,0) < U ≤ e(X,1))
        (DgpDesign::Iv, Estimand::Lps) => Some(spec.propensity(x, 1) - spec.propensity(x, 0)),
        (DgpDesign::Iv, Estimand::Ps) => Some(1.0),
        (DgpDesign::Rd, Estimand::Psc) => Some(1.0),
        _ => None,
    }
}

/// The estimand each simulated design reports by default.
pub fn default_estimand(design: DgpDesign) -> Estimand {
    match design {
        DgpDesign::SooRandomized | DgpDesign::SooObservational => Estimand::Ps,
        DgpDesign::Iv => Estimand::Lps,
        DgpDesign::Rd => Estimand::Psc,
        DgpDesign::Did => Estimand::Pst,
    }
}

/// Ground truth of `estimand` under `spec` from `draws` covariate draws.
pub fn true_shift(spec: &DgpSpec, estimand: Estimand, draws: usize) -> Result<TrueShift, TruthError> {
    if draws < 2 {
        return Err(TruthError::TooFewDraws);
    }
    let unsupported = TruthError::Unsupported { design: spec.design.as_str(), estimand };
    weight(spec, estimand, &[0.5; 3]).ok_or(unsupported)?;

    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(spec.seed, TRUTH_STREAM));
    // Per-draw contributions are kept so the ratio's delta-method SE is exact.
    let mut w = Vec::with_capacity(draws);
    let mut diffs = Vec::with_capacity(draws * N_CATEGORIES);
    for _ in 0..draws {
        let mut x: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        if spec.design == DgpDesign::Rd {
            x[0] = RD_CUTOFF;
        }
        let wi = weight(spec, estimand, &x).expect("checked above");
        let p1 = class_probs(spec.outcome, 1, &x);
        let p0 = class_probs(spec.outcome, 0, &x);
        w.push(wi);
        diffs.extend((0..N_CATEGORIES).map(|m| p1[m] - p0[m]));
    }

    let total_w = crate::linalg::compensated_sum(w.iter().copied());
    let mut values = Vec::with_capacity(N_CATEGORIES);
    let mut mc_se = Vec::with_capacity(N_CATEGORIES);
    for m in 0..N_CATEGORIES {
        let num = crate::linalg::compensated_sum((0..draws).map(|i| w[i] * diffs[i * N_CATEGORIES + m]));
        let value = num / total_w;
        let ss = crate::linalg::compensated_sum((0..draws).map(|i| {
            let r = w[i] * (diffs[i * N_CATEGORIES + m] - value);
            r * r
        }));
        values.push(value);
        mc_se.push(ss.sqrt() / total_w);
    }
    Ok(TrueShift { estimand, values, mc_se, draws })
}
