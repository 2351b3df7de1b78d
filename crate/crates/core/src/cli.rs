//! Command-line front end.
//!
//! * `estimate` reads a CSV sample and prints a JSON estimate.
//! * `simulate` runs a replication study and writes its report.
//! * `generate` dumps one simulated sample as CSV.
//!
//! Exit codes: 0 on success, 2 for invalid input or flags, 3 when estimation
//! fails or too many replications fail.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dgp::{self, DgpDesign, DgpSpec, EstimatorConfig, OutcomeKind};
use crate::estimate::{Estimand, ShiftEstimate};
use crate::io::{read_sample_path, write_sample, CsvSchema, DEFAULT_PERIOD_COL, DEFAULT_UNIT_COL};
use crate::rd::{Bandwidth, RdOptions};
use crate::sample::{Design, QualSample};
use crate::soo::{PstScore, SooOptions};
use crate::{did, iv, rd, soo, Error};

/// Largest tolerated share of failed replications in `simulate`.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(name = "qualshift", version, about = "Probability-shift effects for qualitative outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate probability shifts from a CSV file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study on a simulated design.
    Simulate(SimulateArgs),
    /// Write one simulated sample as CSV.
    Generate(GenerateArgs),
}

impl Command {
    /// Estimator flags of `estimate` or `simulate`.
    pub fn estimate_flags(&self) -> Option<EstimatorFlags> {
        match self {
            Command::Estimate(a) => Some(a.flags.clone()),
            Command::Simulate(a) => Some(a.flags.clone()),
            Command::Generate(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Soo,
    Iv,
    Rd,
    Did,
}

impl From<DesignArg> for Design {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Soo => Design::Soo,
            DesignArg::Iv => Design::Iv,
            DesignArg::Rd => Design::Rd,
            DesignArg::Did => Design::Did,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimandArg {
    Ps,
    Pst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeArg {
    Multinomial,
    Ordered,
}

impl From<OutcomeArg> for OutcomeKind {
    fn from(o: OutcomeArg) -> Self {
        match o {
            OutcomeArg::Multinomial => OutcomeKind::Multinomial,
            OutcomeArg::Ordered => OutcomeKind::Ordered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum AssignmentArg {
    #[default]
    Randomized,
    Observational,
}

/// `auto` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthArg(pub Bandwidth);

impl FromStr for BandwidthArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(BandwidthArg(Bandwidth::Auto));
        }
        match s.parse::<f64>() {
            Ok(h) if h.is_finite() && h > 0.0 => Ok(BandwidthArg(Bandwidth::Fixed(h))),
            _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
        }
    }
}

/// Estimator flags shared by `estimate` and `simulate`.
#[derive(Debug, Clone, Args)]
pub struct EstimatorFlags {
    /// Cross-fitting folds (selection on observables).
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Significance level of the reported intervals.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// RD bandwidth: `auto` or a fixed positive value.
    #[arg(long, default_value = "auto")]
    pub bandwidth: BandwidthArg,
    /// Report the conventional local-linear RD estimate.
    #[arg(long)]
    pub no_bias_correction: bool,
    /// Select an RD bandwidth per category.
    #[arg(long)]
    pub per_category_bandwidth: bool,
    /// Target estimand for selection on observables.
    #[arg(long, value_enum, default_value = "ps")]
    pub estimand: EstimandArg,
    /// Use the plug-in instead of the doubly robust PST score.
    #[arg(long)]
    pub pst_plugin: bool,
    /// Classical instead of heteroskedasticity-robust IV standard errors.
    #[arg(long)]
    pub homoskedastic: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub design: DesignArg,
    #[arg(long)]
    pub input: PathBuf,
    /// JSON destination; standard output if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// RD cutoff of the `run` column.
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long, default_value = DEFAULT_PERIOD_COL)]
    pub period_col: String,
    #[arg(long, default_value = DEFAULT_UNIT_COL)]
    pub unit_col: String,
    #[command(flatten)]
    pub flags: EstimatorFlags,
}

#[derive(Debug, Clone, Args)]
pub struct DgpArgs {
    #[arg(long, value_enum)]
    pub design: DesignArg,
    #[arg(long, value_enum, default_value = "multinomial")]
    pub outcome: OutcomeArg,
    /// Treatment assignment for selection on observables.
    #[arg(long, value_enum, default_value = "randomized")]
    pub assignment: AssignmentArg,
    /// Units per sample (DiD samples have two rows per unit).
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

impl DgpArgs {
    pub fn spec(&self) -> DgpSpec {
        let design = match (self.design, self.assignment) {
            (DesignArg::Soo, AssignmentArg::Randomized) => DgpDesign::SooRandomized,
            (DesignArg::Soo, AssignmentArg::Observational) => DgpDesign::SooObservational,
            (DesignArg::Iv, _) => DgpDesign::Iv,
            (DesignArg::Rd, _) => DgpDesign::Rd,
            (DesignArg::Did, _) => DgpDesign::Did,
        };
        DgpSpec::new(design, self.outcome.into(), self.n, self.seed)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    /// Report CSV destination; standard output if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Covariate draws for the ground-truth oracle.
    #[arg(long, default_value_t = dgp::DEFAULT_TRUTH_DRAWS)]
    pub truth_draws: usize,
    #[command(flatten)]
    pub flags: EstimatorFlags,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    /// CSV destination; standard output if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Estimator configuration independent of where the data came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateConfig {
    pub design: Design,
    pub estimand: Estimand,
    pub soo: SooOptions,
    pub iv: iv::IvOptions,
    pub rd: RdOptions,
    pub alpha: f64,
}

impl EstimatorFlags {
    fn config(&self, design: Design, seed: u64) -> EstimateConfig {
        let soo = SooOptions {
            k: self.k,
            seed,
            alpha: self.alpha,
            pst_score: if self.pst_plugin { PstScore::PlugIn } else { PstScore::DoublyRobust },
            ..SooOptions::default()
        };
        let iv = iv::IvOptions {
            alpha: self.alpha,
            covariance: if self.homoskedastic { iv::IvCovariance::Homoskedastic } else { iv::IvCovariance::Robust },
        };
        let rd = RdOptions {
            bandwidth: self.bandwidth.0,
            bias_correction: !self.no_bias_correction,
            per_category_bandwidth: self.per_category_bandwidth,
            alpha: self.alpha,
            ..RdOptions::default()
        };
        let estimand = match design {
            Design::Soo if self.estimand == EstimandArg::Pst => Estimand::Pst,
            Design::Soo => Estimand::Ps,
            Design::Iv => Estimand::Lps,
            Design::Rd => Estimand::Psc,
            Design::Did => Estimand::Pst,
        };
        EstimateConfig { design, estimand, soo, iv, rd, alpha: self.alpha }
    }

    fn check(&self, design: Design) -> Result<(), Error> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("--alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if design == Design::Soo && self.k < 2 {
            return Err(Error::Config("--k must be at least 2".into()));
        }
        if design != Design::Soo && self.estimand == EstimandArg::Pst {
            // PST is implied for DiD and undefined elsewhere; only flag the contradiction.
            if design != Design::Did {
                return Err(Error::Config(format!("--estimand pst is not available for --design {design}")));
            }
        }
        Ok(())
    }
}

/// Runs the estimator `config` selects on an in-memory sample.
pub fn estimate_sample(sample: &QualSample, config: &EstimateConfig) -> Result<ShiftEstimate, Error> {
    Ok(match config.design {
        Design::Soo => match config.estimand {
            Estimand::Pst => soo::estimate_pst(sample, &config.soo)?,
            _ => soo::estimate_ps(sample, &config.soo)?,
        },
        Design::Iv => iv::estimate_lps(sample, &config.iv)?,
        Design::Rd => rd::estimate_psc(sample, &config.rd)?,
        Design::Did => did::estimate_pst_did(sample, config.alpha)?,
    })
}

impl EstimateArgs {
    /// Validates flag combinations and returns the estimator configuration.
    pub fn config(&self) -> Result<EstimateConfig, Error> {
        let design: Design = self.design.into();
        self.flags.check(design)?;
        if design == Design::Rd && self.cutoff.is_none() {
            return Err(Error::Config("--design rd requires --cutoff".into()));
        }
        if let Some(c) = self.cutoff {
            if !c.is_finite() {
                return Err(Error::Config(format!("--cutoff must be finite, got {c}")));
            }
        }
        Ok(self.flags.config(design, self.seed))
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema { period_col: self.period_col.clone(), unit_col: self.unit_col.clone() }
    }
}

fn write_or_print(path: Option<&PathBuf>, contents: &str, out: &mut dyn Write) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, contents),
        None => out.write_all(contents.as_bytes()),
    }
    .map_err(|e| Error::Io(crate::io::IoError::Write(e)))
}

pub fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write) -> Result<ShiftEstimate, Error> {
    let config = args.config()?;
    let mut sample = read_sample_path(&args.input, &args.schema())?;
    if let Some(c) = args.cutoff {
        sample = sample.with_cutoff(c);
    }
    let est = estimate_sample(&sample, &config)?;
    let mut json = est.to_json_string();
    json.push('\n');
    write_or_print(args.output.as_ref(), &json, out)?;
    Ok(est)
}

impl SimulateArgs {
    pub fn estimator_config(&self) -> Result<EstimatorConfig, Error> {
        let design: Design = self.dgp.design.into();
        self.flags.check(design)?;
        if self.reps == 0 {
            return Err(Error::Config("--reps must be at least 1".into()));
        }
        let c = self.flags.config(design, self.dgp.seed);
        Ok(EstimatorConfig {
            soo: c.soo,
            soo_estimand: if design == Design::Soo { c.estimand } else { Estimand::Ps },
            iv: c.iv,
            rd: c.rd,
            alpha: c.alpha,
            truth_draws: self.truth_draws,
        })
    }
}

/// Runs the study, writes the CSV report and prints the table to `table`.
/// Fails with exit code 3 when more than 1% of replications failed.
pub fn cmd_simulate(
    args: &SimulateArgs,
    out: &mut dyn Write,
    table: &mut dyn Write,
) -> Result<dgp::MonteCarloReport, Error> {
    let config = args.estimator_config()?;
    let report = dgp::run_monte_carlo(&args.dgp.spec(), &config, args.reps)?;
    write_or_print(args.output.as_ref(), &report.to_csv(), out)?;
    table.write_all(report.pretty_table().as_bytes()).map_err(|e| Error::Io(crate::io::IoError::Write(e)))?;
    Ok(report)
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<QualSample, Error> {
    let sample = dgp::gen_sample(&args.dgp.spec());
    let mut buf = Vec::new();
    write_sample(&sample, &mut buf, &CsvSchema::default())?;
    write_or_print(args.output.as_ref(), &String::from_utf8(buf).expect("CSV is UTF-8"), out)?;
    Ok(sample)
}

/// Runs a parsed command line and returns the process exit code. Errors are
/// reported on `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, out).map(|_| 0),
        Command::Simulate(a) => {
            let table_to_stdout = a.output.is_some();
            let mut table = Vec::new();
            let res = cmd_simulate(a, out, &mut table);
            let sink: &mut dyn Write = if table_to_stdout { &mut *out } else { &mut *err };
            let _ = sink.write_all(&table);
            res.map(|r| {
                if r.failure_rate() > MAX_FAILURE_RATE {
                    let _ = writeln!(
                        err,
                        "error: {} of {} replications failed (more than {}%)",
                        r.failures,
                        r.reps,
                        MAX_FAILURE_RATE * 100.0
                    );
                    3
                } else {
                    0
                }
            })
        }
        Command::Generate(a) => cmd_generate(a, out).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
