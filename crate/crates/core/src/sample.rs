//! Observation-level data for qualitative-outcome causal problems.
//!
//! A [`QualSample`] is built once and never mutated. [`validate_sample`]
//! returns a normalized copy: outcome labels are mapped onto the contiguous
//! range `1..=M`, and the original labels are kept in a label map so that
//! reports can show what the user supplied.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Research design an estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// Selection on observables.
    Soo,
    /// Binary instrument.
    Iv,
    /// Sharp regression discontinuity.
    Rd,
    /// Two-period difference-in-differences.
    Did,
}

impl Design {
    pub fn as_str(self) -> &'static str {
        match self {
            Design::Soo => "soo",
            Design::Iv => "iv",
            Design::Rd => "rd",
            Design::Did => "did",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Design {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "soo" => Ok(Design::Soo),
            "iv" => Ok(Design::Iv),
            "rd" => Ok(Design::Rd),
            "did" => Ok(Design::Did),
            other => Err(format!("unknown design `{other}`")),
        }
    }
}

/// Panel period of a DiD observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Period {
    Pre,
    Post,
}

impl Period {
    pub fn index(self) -> usize {
        match self {
            Period::Pre => 0,
            Period::Post => 1,
        }
    }
}

/// Dense row-major covariate matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Covariates {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Covariates {
    /// Builds a matrix from row-major data. Panics if `data.len() != n_rows * n_cols`.
    pub fn from_row_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "covariate buffer has wrong length");
        Self { data, n_rows, n_cols }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), n_cols, "ragged covariate rows");
            data.extend_from_slice(r);
        }
        Self { data, n_rows: rows.len(), n_cols }
    }

    /// An `n × 0` matrix.
    pub fn empty(n_rows: usize) -> Self {
        Self { data: Vec::new(), n_rows, n_cols: 0 }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { data: vec![0.0; n_rows * n_cols], n_rows, n_cols }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Covariates {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Covariates { data, n_rows: rows.len(), n_cols: self.n_cols }
    }
}

/// One set of observations: outcome, treatment and whatever design-specific
/// columns the caller supplies.
#[derive(Debug, Clone, PartialEq)]
pub struct QualSample {
    outcome: Vec<i64>,
    treatment: Vec<u8>,
    covariates: Covariates,
    covariate_names: Vec<String>,
    instrument: Option<Vec<u8>>,
    running_var: Option<Vec<f64>>,
    cutoff: Option<f64>,
    period: Option<Vec<Period>>,
    unit_id: Option<Vec<u64>>,
    n_categories: Option<usize>,
    labels: Option<Vec<i64>>,
}

impl QualSample {
    /// Starts a sample with no covariates.
    pub fn new(outcome: Vec<i64>, treatment: Vec<u8>) -> Self {
        let n = outcome.len();
        Self {
            outcome,
            treatment,
            covariates: Covariates::empty(n),
            covariate_names: Vec::new(),
            instrument: None,
            running_var: None,
            cutoff: None,
            period: None,
            unit_id: None,
            n_categories: None,
            labels: None,
        }
    }

    pub fn with_covariates(mut self, covariates: Covariates) -> Self {
        self.covariate_names = (1..=covariates.n_cols()).map(|j| format!("x{j}")).collect();
        self.covariates = covariates;
        self
    }

    /// Replaces the default `x1..xp` covariate names. Panics on a count mismatch.
    pub fn with_covariate_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.covariates.n_cols(), "covariate name count mismatch");
        self.covariate_names = names;
        self
    }

    pub fn with_instrument(mut self, instrument: Vec<u8>) -> Self {
        self.instrument = Some(instrument);
        self
    }

    pub fn with_running_var(mut self, running_var: Vec<f64>) -> Self {
        self.running_var = Some(running_var);
        self
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn with_period(mut self, period: Vec<Period>) -> Self {
        self.period = Some(period);
        self
    }

    pub fn with_unit_id(mut self, unit_id: Vec<u64>) -> Self {
        self.unit_id = Some(unit_id);
        self
    }

    /// Declares the number of outcome categories; labels must then lie in `1..=m`.
    pub fn with_n_categories(mut self, m: usize) -> Self {
        self.n_categories = Some(m);
        self
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn outcome(&self) -> &[i64] {
        &self.outcome
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn instrument(&self) -> Option<&[u8]> {
        self.instrument.as_deref()
    }

    pub fn running_var(&self) -> Option<&[f64]> {
        self.running_var.as_deref()
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    pub fn period(&self) -> Option<&[Period]> {
        self.period.as_deref()
    }

    pub fn unit_id(&self) -> Option<&[u64]> {
        self.unit_id.as_deref()
    }

    /// Number of categories, known once the sample is validated or declared.
    pub fn n_categories(&self) -> Option<usize> {
        self.n_categories
    }

    /// User-facing label of each internal category `1..=M`. Identity if unset.
    pub fn labels(&self) -> Vec<i64> {
        match &self.labels {
            Some(l) => l.clone(),
            None => (1..=self.n_categories.unwrap_or(0) as i64).collect(),
        }
    }

    /// Outcome of every unit in user-facing labels.
    pub fn outcome_labels(&self) -> Vec<i64> {
        match &self.labels {
            Some(l) => self.outcome.iter().map(|&y| l[(y - 1) as usize]).collect(),
            None => self.outcome.clone(),
        }
    }

    /// Zero-based category index of unit `i`. Only meaningful after validation.
    #[inline]
    pub fn category(&self, i: usize) -> usize {
        (self.outcome[i] - 1) as usize
    }

    pub(crate) fn m(&self) -> usize {
        self.n_categories.expect("sample must be validated before estimation")
    }

    pub(crate) fn is_treated(&self, i: usize) -> bool {
        self.treatment[i] == 1
    }
}

/// Reasons a sample is rejected for a design.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("design {design} requires the `{field}` column")]
    MissingField { design: Design, field: &'static str },
    #[error("treatment arm D={0} has no units")]
    EmptyArm(u8),
    #[error("outcome label of unit {0} is outside 1..=M")]
    LabelOutOfRange(usize),
    #[error("declared category {0} never appears in the outcome")]
    MissingCategory(usize),
    #[error("outcome has {0} distinct categories; at least 2 are required")]
    TooFewCategories(usize),
    #[error("`{field}` of unit {index} is not 0/1")]
    NonBinary { field: &'static str, index: usize },
    #[error("`{field}` of unit {index} is not finite")]
    NonFinite { field: &'static str, index: usize },
    #[error("`{field}` has {got} entries, expected {expected}")]
    LengthMismatch { field: &'static str, expected: usize, got: usize },
    #[error("unit {0} is not observed exactly once in each period")]
    UnbalancedPanel(u64),
    #[error("treatment of unit {0} changes across periods")]
    InconsistentTreatment(u64),
    #[error("sample is empty")]
    Empty,
}

fn check_len(field: &'static str, expected: usize, got: usize) -> Result<(), ValidationError> {
    if expected == got {
        Ok(())
    } else {
        Err(ValidationError::LengthMismatch { field, expected, got })
    }
}

fn check_binary(field: &'static str, v: &[u8]) -> Result<(), ValidationError> {
    match v.iter().position(|&x| x > 1) {
        Some(index) => Err(ValidationError::NonBinary { field, index }),
        None => Ok(()),
    }
}

/// Checks a sample against a design and returns its normalized form.
///
/// The returned sample has `n_categories` set and outcome labels in `1..=M`.
/// Validating an already validated sample returns it unchanged.
pub fn validate_sample(sample: &QualSample, design: Design) -> Result<QualSample, ValidationError> {
    let n = sample.len();
    if n == 0 {
        return Err(ValidationError::Empty);
    }
    check_len("d", n, sample.treatment.len())?;
    check_len("covariates", n, sample.covariates.n_rows())?;
    check_binary("d", &sample.treatment)?;
    if let Some(index) = sample.covariates.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(ValidationError::NonFinite {
            field: "covariates",
            index: index / sample.covariates.n_cols().max(1),
        });
    }

    for arm in [0u8, 1] {
        if !sample.treatment.contains(&arm) {
            return Err(ValidationError::EmptyArm(arm));
        }
    }

    match design {
        Design::Soo => {}
        Design::Iv => {
            let z = sample
                .instrument
                .as_ref()
                .ok_or(ValidationError::MissingField { design, field: "instrument" })?;
            check_len("z", n, z.len())?;
            check_binary("z", z)?;
        }
        Design::Rd => {
            let x = sample
                .running_var
                .as_ref()
                .ok_or(ValidationError::MissingField { design, field: "running_var" })?;
            if sample.cutoff.is_none() {
                return Err(ValidationError::MissingField { design, field: "cutoff" });
            }
            check_len("run", n, x.len())?;
            if let Some(index) = x.iter().position(|v| !v.is_finite()) {
                return Err(ValidationError::NonFinite { field: "run", index });
            }
            if !sample.cutoff.unwrap().is_finite() {
                return Err(ValidationError::NonFinite { field: "cutoff", index: 0 });
            }
        }
        Design::Did => {
            let period = sample
                .period
                .as_ref()
                .ok_or(ValidationError::MissingField { design, field: "period" })?;
            check_len("period", n, period.len())?;
            if let Some(ids) = &sample.unit_id {
                check_len("unit_id", n, ids.len())?;
                check_panel(period, ids, &sample.treatment)?;
            }
        }
    }

    let (outcome, m, labels) = normalize_labels(sample)?;
    let mut out = sample.clone();
    out.outcome = outcome;
    out.n_categories = Some(m);
    out.labels = Some(labels);
    Ok(out)
}

// Each unit must appear once per period; a unit seen in only one period
// makes the panel unbalanced.
fn check_panel(period: &[Period], ids: &[u64], treatment: &[u8]) -> Result<(), ValidationError> {
    let mut seen: HashMap<u64, [Option<u8>; 2]> = HashMap::with_capacity(ids.len() / 2 + 1);
    for ((&id, &p), &d) in ids.iter().zip(period).zip(treatment) {
        let slots = seen.entry(id).or_insert([None, None]);
        if slots[p.index()].is_some() {
            return Err(ValidationError::UnbalancedPanel(id));
        }
        slots[p.index()] = Some(d);
    }
    // Report the smallest offending id so the error is deterministic.
    let mut bad: Option<ValidationError> = None;
    let mut bad_id = u64::MAX;
    for (&id, slots) in &seen {
        let err = match slots {
            [Some(a), Some(b)] if a != b => Some(ValidationError::InconsistentTreatment(id)),
            [Some(_), Some(_)] => None,
            _ => Some(ValidationError::UnbalancedPanel(id)),
        };
        if let Some(e) = err {
            if id < bad_id {
                bad_id = id;
                bad = Some(e);
            }
        }
    }
    match bad {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn normalize_labels(sample: &QualSample) -> Result<(Vec<i64>, usize, Vec<i64>), ValidationError> {
    match sample.n_categories {
        Some(m) => {
            if let Some(i) = sample.outcome.iter().position(|&y| y < 1 || y > m as i64) {
                return Err(ValidationError::LabelOutOfRange(i));
            }
            let mut present = vec![false; m];
            for &y in &sample.outcome {
                present[(y - 1) as usize] = true;
            }
            if let Some(k) = present.iter().position(|p| !p) {
                return Err(ValidationError::MissingCategory(k + 1));
            }
            if m < 2 {
                return Err(ValidationError::TooFewCategories(m));
            }
            let labels = match &sample.labels {
                Some(l) if l.len() == m => l.clone(),
                _ => (1..=m as i64).collect(),
            };
            Ok((sample.outcome.clone(), m, labels))
        }
        None => {
            let distinct: BTreeSet<i64> = sample.outcome.iter().copied().collect();
            if distinct.len() < 2 {
                return Err(ValidationError::TooFewCategories(distinct.len()));
            }
            let labels: Vec<i64> = distinct.into_iter().collect();
            let index: HashMap<i64, i64> =
                labels.iter().enumerate().map(|(k, &l)| (l, k as i64 + 1)).collect();
            let outcome = sample.outcome.iter().map(|y| index[y]).collect();
            Ok((outcome, labels.len(), labels))
        }
    }
}
