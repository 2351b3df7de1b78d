//! Replication harness: bias, spread and interval coverage against the oracle.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::truth::default_estimand;
use super::{derive_seed, gen_sample, true_shift, DgpDesign, DgpSpec, OutcomeKind, TrueShift, DEFAULT_TRUTH_DRAWS};
use crate::estimate::{Estimand, ShiftEstimate};
use crate::linalg::compensated_sum;
use crate::{did, iv, rd, soo, Error};

pub const REPORT_CSV_HEADER: &str = "design,outcome_kind,class,truth,abs_bias,sd,coverage";

// Stream offsets separating sample draws from cross-fitting seeds.
const SAMPLE_STREAM: u64 = 0;
const FOLD_STREAM: u64 = 1 << 32;

/// Estimator settings used inside each replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub soo: soo::SooOptions,
    /// `Ps` or `Pst` for selection-on-observables designs.
    pub soo_estimand: Estimand,
    pub iv: iv::IvOptions,
    pub rd: rd::RdOptions,
    pub alpha: f64,
    pub truth_draws: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            soo: soo::SooOptions::default(),
            soo_estimand: Estimand::Ps,
            iv: iv::IvOptions::default(),
            rd: rd::RdOptions::default(),
            alpha: 0.05,
            truth_draws: DEFAULT_TRUTH_DRAWS,
        }
    }
}

impl EstimatorConfig {
    pub fn estimand_for(&self, design: DgpDesign) -> Estimand {
        match design {
            DgpDesign::SooRandomized | DgpDesign::SooObservational => self.soo_estimand,
            other => default_estimand(other),
        }
    }

    /// Runs the design's estimator on one simulated sample.
    pub fn estimate(&self, design: DgpDesign, sample: &crate::QualSample, fold_seed: u64) -> Result<ShiftEstimate, Error> {
        Ok(match design {
            DgpDesign::SooRandomized | DgpDesign::SooObservational => {
                let opts = soo::SooOptions { seed: fold_seed, alpha: self.alpha, ..self.soo };
                match self.soo_estimand {
                    Estimand::Pst => soo::estimate_pst(sample, &opts)?,
                    _ => soo::estimate_ps(sample, &opts)?,
                }
            }
            DgpDesign::Iv => iv::estimate_lps(sample, &iv::IvOptions { alpha: self.alpha, ..self.iv })?,
            DgpDesign::Rd => rd::estimate_psc(sample, &rd::RdOptions { alpha: self.alpha, ..self.rd })?,
            DgpDesign::Did => did::estimate_pst_did(sample, self.alpha)?,
        })
    }
}

/// Summary of one outcome category across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub class: usize,
    pub truth: f64,
    pub truth_se: f64,
    pub mean_estimate: f64,
    /// `|mean estimate − truth|`.
    pub abs_bias: f64,
    pub sd: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub design: DgpDesign,
    pub outcome: OutcomeKind,
    pub estimand: Estimand,
    pub n: usize,
    pub reps: usize,
    pub failures: usize,
    pub classes: Vec<ClassSummary>,
    pub runtime_secs: f64,
    /// Per-replication point estimates of successful replications, in replication order.
    pub estimates: Vec<Vec<f64>>,
}

impl MonteCarloReport {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.reps as f64
    }

    /// The report as CSV. Runtime is left out so identical runs give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{REPORT_CSV_HEADER}").unwrap();
        for c in &self.classes {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                self.design.as_str(),
                self.outcome.as_str(),
                c.class,
                c.truth,
                c.abs_bias,
                c.sd,
                c.coverage
            )
            .unwrap();
        }
        out
    }

    /// Human-readable table in the layout of a simulation results table.
    pub fn pretty_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{} / {}: {} (n = {}, {} replications, {} failed)",
            self.design.as_str(),
            self.outcome.as_str(),
            self.estimand,
            self.n,
            self.reps,
            self.failures
        )
        .unwrap();
        writeln!(out, "{:<10}{:>10}{:>10}{:>10}{:>10}", "", "truth", "|bias|", "SD", "95%").unwrap();
        for c in &self.classes {
            writeln!(
                out,
                "{:<10}{:>10.3}{:>10.3}{:>10.3}{:>10.3}",
                format!("Class {}", c.class),
                c.truth,
                c.abs_bias,
                c.sd,
                c.coverage
            )
            .unwrap();
        }
        writeln!(out, "runtime: {:.1}s", self.runtime_secs).unwrap();
        out
    }
}

fn summarize(truth: &TrueShift, results: &[ShiftEstimate]) -> Vec<ClassSummary> {
    let r = results.len() as f64;
    (0..truth.values.len())
        .map(|m| {
            let points: Vec<f64> = results.iter().map(|e| e.categories[m].point).collect();
            let mean = compensated_sum(points.iter().copied()) / r;
            let sd = if results.len() > 1 {
                (compensated_sum(points.iter().map(|p| (p - mean).powi(2))) / (r - 1.0)).sqrt()
            } else {
                0.0
            };
            let covered = results.iter().filter(|e| e.categories[m].covers(truth.values[m])).count();
            ClassSummary {
                class: m + 1,
                truth: truth.values[m],
                truth_se: truth.mc_se[m],
                mean_estimate: mean,
                abs_bias: (mean - truth.values[m]).abs(),
                sd,
                coverage: covered as f64 / r,
            }
        })
        .collect()
}

/// Runs `reps` replications of `spec`. Replication `r` draws its sample and
/// its fold seed from `(spec.seed, r)`, and results are collected in
/// replication order, so the report does not depend on thread scheduling.
pub fn run_monte_carlo(spec: &DgpSpec, config: &EstimatorConfig, reps: usize) -> Result<MonteCarloReport, Error> {
    if reps == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let start = Instant::now();
    let estimand = config.estimand_for(spec.design);
    let truth = true_shift(spec, estimand, config.truth_draws)?;

    let results: Vec<Result<ShiftEstimate, Error>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let rep = spec.with_seed(derive_seed(spec.seed, SAMPLE_STREAM + r));
            let sample = gen_sample(&rep);
            config.estimate(spec.design, &sample, derive_seed(spec.seed, FOLD_STREAM + r))
        })
        .collect();

    let mut ok = Vec::with_capacity(reps);
    let mut failures = 0;
    let mut last_error = None;
    for res in results {
        match res {
            Ok(e) => ok.push(e),
            Err(e) => {
                failures += 1;
                last_error = Some(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(last_error.expect("at least one replication ran"));
    }
    let classes = summarize(&truth, &ok);
    Ok(MonteCarloReport {
        design: spec.design,
        outcome: spec.outcome,
        estimand,
        n: spec.n,
        reps,
        failures,
        classes,
        runtime_secs: start.elapsed().as_secs_f64(),
        estimates: ok.iter().map(|e| e.points()).collect(),
    })
}
