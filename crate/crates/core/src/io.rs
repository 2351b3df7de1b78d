//! CSV ingestion and export.
//!
//! The header is required. Recognized columns are `y` (integer outcome), `d`
//! (0/1 treatment), and the optional `z` (0/1 instrument), `run` (running
//! variable), a period column (0 = pre, 1 = post) and a unit id column. Every
//! other column is a numeric covariate, in file order.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sample::{Covariates, Period, QualSample};

pub const DEFAULT_PERIOD_COL: &str = "period";
pub const DEFAULT_UNIT_COL: &str = "unit_id";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("required column `{0}` is missing from the header")]
    MissingColumn(&'static str),
    #[error("column `{0}` appears more than once")]
    DuplicateColumn(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as {expected}")]
    Parse { line: u64, column: String, value: String, expected: &'static str },
    #[error("no data rows")]
    NoRows,
    #[error(transparent)]
    Write(#[from] std::io::Error),
}

/// Names of the optional design columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub period_col: String,
    pub unit_col: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { period_col: DEFAULT_PERIOD_COL.into(), unit_col: DEFAULT_UNIT_COL.into() }
    }
}

enum Role {
    Outcome,
    Treatment,
    Instrument,
    Running,
    Period,
    Unit,
    Covariate(usize),
}

fn parse_err(line: u64, column: &str, value: &str, expected: &'static str) -> IoError {
    IoError::Parse { line, column: column.to_string(), value: value.to_string(), expected }
}

fn parse_binary(line: u64, column: &str, value: &str) -> Result<u8, IoError> {
    match value.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(parse_err(line, column, value, "0 or 1")),
    }
}

/// Reads a sample from any CSV source.
pub fn read_sample<R: Read>(reader: R, schema: &CsvSchema) -> Result<QualSample, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| IoError::Csv { line: 1, source: e })?.clone();

    let mut seen = HashMap::new();
    let mut roles = Vec::with_capacity(headers.len());
    let mut cov_names = Vec::new();
    for name in headers.iter() {
        if seen.insert(name.to_string(), ()).is_some() {
            return Err(IoError::DuplicateColumn(name.to_string()));
        }
        roles.push(match name {
            "y" => Role::Outcome,
            "d" => Role::Treatment,
            "z" => Role::Instrument,
            "run" => Role::Running,
            n if n == schema.period_col => Role::Period,
            n if n == schema.unit_col => Role::Unit,
            n => {
                cov_names.push(n.to_string());
                Role::Covariate(cov_names.len() - 1)
            }
        });
    }
    let has = |f: fn(&Role) -> bool| roles.iter().any(f);
    if !has(|r| matches!(r, Role::Outcome)) {
        return Err(IoError::MissingColumn("y"));
    }
    if !has(|r| matches!(r, Role::Treatment)) {
        return Err(IoError::MissingColumn("d"));
    }
    let p = cov_names.len();

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut z = Vec::new();
    let mut run = Vec::new();
    let mut period = Vec::new();
    let mut unit_raw: Vec<String> = Vec::new();
    let mut cov = Vec::new();
    let mut row_cov = vec![0.0; p];

    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| IoError::Csv { line, source: e })?;
        for ((value, name), role) in rec.iter().zip(headers.iter()).zip(&roles) {
            match role {
                Role::Outcome => y.push(value.parse::<i64>().map_err(|_| parse_err(line, name, value, "an integer"))?),
                Role::Treatment => d.push(parse_binary(line, name, value)?),
                Role::Instrument => z.push(parse_binary(line, name, value)?),
                Role::Running => run.push(value.parse::<f64>().map_err(|_| parse_err(line, name, value, "a number"))?),
                Role::Period => period.push(match parse_binary(line, name, value)? {
                    0 => Period::Pre,
                    _ => Period::Post,
                }),
                Role::Unit => unit_raw.push(value.to_string()),
                Role::Covariate(j) => {
                    row_cov[*j] = value.parse::<f64>().map_err(|_| parse_err(line, name, value, "a number"))?
                }
            }
        }
        cov.extend_from_slice(&row_cov);
    }
    let n = y.len();
    if n == 0 {
        return Err(IoError::NoRows);
    }

    let mut sample = QualSample::new(y, d)
        .with_covariates(Covariates::from_row_major(n, p, cov))
        .with_covariate_names(cov_names);
    if has(|r| matches!(r, Role::Instrument)) {
        sample = sample.with_instrument(z);
    }
    if has(|r| matches!(r, Role::Running)) {
        sample = sample.with_running_var(run);
    }
    if has(|r| matches!(r, Role::Period)) {
        sample = sample.with_period(period);
    }
    if has(|r| matches!(r, Role::Unit)) {
        sample = sample.with_unit_id(intern_ids(unit_raw));
    }
    Ok(sample)
}

/// Integer ids are kept as they are; anything else is numbered in order of
/// first appearance.
fn intern_ids(raw: Vec<String>) -> Vec<u64> {
    if let Ok(ids) = raw.iter().map(|s| s.parse::<u64>()).collect::<Result<Vec<_>, _>>() {
        return ids;
    }
    let mut map: HashMap<String, u64> = HashMap::new();
    raw.into_iter()
        .map(|s| {
            let next = map.len() as u64;
            *map.entry(s).or_insert(next)
        })
        .collect()
}

pub fn read_sample_path(path: &Path, schema: &CsvSchema) -> Result<QualSample, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::Open { path: path.to_path_buf(), source: e })?;
    read_sample(std::io::BufReader::new(file), schema)
}

/// Writes `sample` in the format [`read_sample`] accepts. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_sample<W: Write>(sample: &QualSample, writer: W, schema: &CsvSchema) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let csv_err = |e: csv::Error| IoError::Csv { line: 0, source: e };

    let mut header: Vec<&str> = vec!["y", "d"];
    if sample.instrument().is_some() {
        header.push("z");
    }
    if sample.running_var().is_some() {
        header.push("run");
    }
    if sample.period().is_some() {
        header.push(&schema.period_col);
    }
    if sample.unit_id().is_some() {
        header.push(&schema.unit_col);
    }
    header.extend(sample.covariate_names().iter().map(String::as_str));
    w.write_record(&header).map_err(csv_err)?;

    let y = sample.outcome_labels();
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..sample.len() {
        fields.clear();
        fields.push(y[i].to_string());
        fields.push(sample.treatment()[i].to_string());
        if let Some(z) = sample.instrument() {
            fields.push(z[i].to_string());
        }
        if let Some(r) = sample.running_var() {
            fields.push(r[i].to_string());
        }
        if let Some(p) = sample.period() {
            fields.push(p[i].index().to_string());
        }
        if let Some(u) = sample.unit_id() {
            fields.push(u[i].to_string());
        }
        fields.extend(sample.covariates().row(i).iter().map(f64::to_string));
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sample_path(sample: &QualSample, path: &Path, schema: &CsvSchema) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| IoError::Open { path: path.to_path_buf(), source: e })?;
    write_sample(sample, std::io::BufWriter::new(file), schema)
}
