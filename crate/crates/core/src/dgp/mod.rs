//! Simulation designs used to check the estimators against known truths.
//!
//! Three covariates are drawn i.i.d. `U[0, 1]`. Potential outcomes follow
//! either a multinomial logit in the covariates or an ordered model obtained
//! by cutting a latent normal index at fixed thresholds. Treatment assignment
//! depends on the design.

mod montecarlo;
mod truth;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::sample::{Covariates, Design, Period, QualSample};

pub use montecarlo::{run_monte_carlo, ClassSummary, EstimatorConfig, MonteCarloReport, REPORT_CSV_HEADER};
pub use truth::{default_estimand, true_shift, TrueShift, TruthError, DEFAULT_TRUTH_DRAWS};

/// Number of outcome categories in every simulation design.
pub const N_CATEGORIES: usize = 3;
/// Number of covariates.
pub const N_COVARIATES: usize = 3;

/// Multinomial coefficients for treated potential outcomes, indexed
/// `[covariate][class]`: `η_m(1) = Σ_j x_j · BETA_TREATED[j][m]`.
pub const BETA_TREATED: [[f64; 3]; 3] = [[0.5, 0.3, -0.2], [-0.2, 0.4, 0.1], [0.1, -0.3, 0.5]];
/// Multinomial coefficients for control potential outcomes, same layout.
pub const BETA_CONTROL: [[f64; 3]; 3] = [[0.7, 0.7, -0.2], [-0.2, 0.4, 0.1], [-0.2, -0.5, 0.1]];
/// Cut points of the latent index for ordered outcomes.
pub const THRESHOLDS: [f64; 2] = [2.0, 3.0];
/// Effect of treatment on the latent index.
pub const LATENT_EFFECT: f64 = 2.0;
/// Cutoff of the running variable `X₁` in the discontinuity design.
pub const RD_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DgpDesign {
    /// `e(x) = 0.5`.
    SooRandomized,
    /// `e(x) = (x₁ + x₃) / 2`.
    SooObservational,
    /// `Z ~ Bernoulli(0.5)`, `D = 1{U ≤ (x₁ + x₂ + Z)/3}` with one uniform `U` per unit.
    Iv,
    /// `D = 1{x₁ ≥ 0.5}`.
    Rd,
    /// Two periods; group assignment `e(x) = (x₁ + x₃) / 2`.
    Did,
}

impl DgpDesign {
    pub fn as_str(self) -> &'static str {
        match self {
            DgpDesign::SooRandomized => "soo-randomized",
            DgpDesign::SooObservational => "soo-observational",
            DgpDesign::Iv => "iv",
            DgpDesign::Rd => "rd",
            DgpDesign::Did => "did",
        }
    }

    /// The estimation design the simulated data is meant for.
    pub fn design(self) -> Design {
        match self {
            DgpDesign::SooRandomized | DgpDesign::SooObservational => Design::Soo,
            DgpDesign::Iv => Design::Iv,
            DgpDesign::Rd => Design::Rd,
            DgpDesign::Did => Design::Did,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Multinomial,
    Ordered,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Multinomial => "multinomial",
            OutcomeKind::Ordered => "ordered",
        }
    }
}

/// A simulation configuration. `n` counts units; a DiD sample has `2n` rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub design: DgpDesign,
    pub outcome: OutcomeKind,
    pub n: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(design: DgpDesign, outcome: OutcomeKind, n: usize, seed: u64) -> Self {
        Self { design, outcome, n, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    /// Treatment probability given covariates (and the instrument for IV).
    pub fn propensity(&self, x: &[f64], z: u8) -> f64 {
        match self.design {
            DgpDesign::SooRandomized => 0.5,
            DgpDesign::SooObservational | DgpDesign::Did => (x[0] + x[2]) / 2.0,
            DgpDesign::Iv => (x[0] + x[1] + f64::from(z)) / 3.0,
            DgpDesign::Rd => f64::from(u8::from(x[0] >= RD_CUTOFF)),
        }
    }
}

/// SplitMix64 finalizer; derives independent stream seeds from `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `P(Y(d) = m | X = x)` under the multinomial model.
pub fn multinomial_probs(d: u8, x: &[f64]) -> [f64; 3] {
    let beta = if d == 1 { &BETA_TREATED } else { &BETA_CONTROL };
    let mut eta = [0.0; 3];
    for (m, e) in eta.iter_mut().enumerate() {
        *e = (0..N_COVARIATES).map(|j| x[j] * beta[j][m]).sum();
    }
    let mx = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = eta.map(|e| (e - mx).exp());
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

/// `P(Y(d) = m | X = x)` under the ordered model.
pub fn ordered_probs(d: u8, x: &[f64]) -> [f64; 3] {
    let normal = Normal::standard();
    let mean = LATENT_EFFECT * f64::from(d) + x.iter().take(N_COVARIATES).sum::<f64>();
    let c1 = normal.cdf(THRESHOLDS[0] - mean);
    let c2 = normal.cdf(THRESHOLDS[1] - mean);
    [c1, c2 - c1, 1.0 - c2]
}

pub fn class_probs(outcome: OutcomeKind, d: u8, x: &[f64]) -> [f64; 3] {
    match outcome {
        OutcomeKind::Multinomial => multinomial_probs(d, x),
        OutcomeKind::Ordered => ordered_probs(d, x),
    }
}

/// Category of a latent index: `m` such that `ζ_{m−1} < y* ≤ ζ_m`.
pub fn ordered_category(latent: f64) -> i64 {
    if latent <= THRESHOLDS[0] {
        1
    } else if latent <= THRESHOLDS[1] {
        2
    } else {
        3
    }
}

fn inverse_cdf_category(probs: &[f64; 3], u: f64) -> i64 {
    if u < probs[0] {
        1
    } else if u < probs[0] + probs[1] {
        2
    } else {
        3
    }
}

/// Draws `(Y(1), Y(0))` for one unit. Both arms share one random draw: the
/// latent noise for ordered outcomes, the uniform for multinomial ones.
pub fn gen_potential_outcomes<R: Rng + ?Sized>(outcome: OutcomeKind, x: &[f64], rng: &mut R) -> (i64, i64) {
    match outcome {
        OutcomeKind::Multinomial => {
            let u: f64 = rng.random();
            (inverse_cdf_category(&multinomial_probs(1, x), u), inverse_cdf_category(&multinomial_probs(0, x), u))
        }
        OutcomeKind::Ordered => {
            let noise: f64 = rng.sample(StandardNormal);
            let base: f64 = x.iter().take(N_COVARIATES).sum::<f64>() + noise;
            (ordered_category(LATENT_EFFECT + base), ordered_category(base))
        }
    }
}

fn draw_covariates<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// Draws one sample from `spec`, deterministically in `spec.seed`.
pub fn gen_sample(spec: &DgpSpec) -> QualSample {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    match spec.design {
        DgpDesign::SooRandomized | DgpDesign::SooObservational | DgpDesign::Rd => {
            let mut rows = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            let mut d = Vec::with_capacity(n);
            for _ in 0..n {
                let x = draw_covariates(&mut rng);
                let (y1, y0) = gen_potential_outcomes(spec.outcome, &x, &mut rng);
                let di = if spec.design == DgpDesign::Rd {
                    u8::from(x[0] >= RD_CUTOFF)
                } else {
                    u8::from(rng.random::<f64>() < spec.propensity(&x, 0))
                };
                y.push(if di == 1 { y1 } else { y0 });
                d.push(di);
                rows.push(x);
            }
            let sample = QualSample::new(y, d).with_covariates(Covariates::from_rows(&rows));
            if spec.design == DgpDesign::Rd {
                let run = rows.iter().map(|r| r[0]).collect();
                sample.with_running_var(run).with_cutoff(RD_CUTOFF)
            } else {
                sample
            }
        }
        DgpDesign::Iv => {
            let mut y = Vec::with_capacity(n);
            let mut d = Vec::with_capacity(n);
            let mut z = Vec::with_capacity(n);
            for _ in 0..n {
                let x = draw_covariates(&mut rng);
                let (y1, y0) = gen_potential_outcomes(spec.outcome, &x, &mut rng);
                let zi = u8::from(rng.random::<f64>() < 0.5);
                let u: f64 = rng.random();
                let di = u8::from(u <= spec.propensity(&x, zi));
                y.push(if di == 1 { y1 } else { y0 });
                d.push(di);
                z.push(zi);
            }
            // Covariates are unobserved in this design.
            QualSample::new(y, d).with_instrument(z)
        }
        DgpDesign::Did => {
            let mut rows = Vec::with_capacity(2 * n);
            let mut y = Vec::with_capacity(2 * n);
            let mut d = Vec::with_capacity(2 * n);
            let mut period = Vec::with_capacity(2 * n);
            let mut unit = Vec::with_capacity(2 * n);
            for i in 0..n {
                let x = draw_covariates(&mut rng);
                let di = u8::from(rng.random::<f64>() < spec.propensity(&x, 0));
                let (_, pre) = gen_potential_outcomes(spec.outcome, &x, &mut rng);
                let (y1, y0) = gen_potential_outcomes(spec.outcome, &x, &mut rng);
                let post = if di == 1 { y1 } else { y0 };
                for (yi, p) in [(pre, Period::Pre), (post, Period::Post)] {
                    y.push(yi);
                    d.push(di);
                    period.push(p);
                    unit.push(i as u64 + 1);
                    rows.push(x);
                }
            }
            QualSample::new(y, d)
                .with_covariates(Covariates::from_rows(&rows))
                .with_period(period)
                .with_unit_id(unit)
        }
    }
}
