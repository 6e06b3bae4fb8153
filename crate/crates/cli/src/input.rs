//! Sample-set and task file readers.
//!
//! CSV inputs carry a header with location columns `x1..xd` and one integrand
//! column `f`, in any order. JSON inputs are `{"x": [[...], ...], "f": [...]}`;
//! for one-dimensional data `x` may also be a flat array.

use std::path::Path;

use dpmbq::testbed::Task;
use dpmbq::SampleSet;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` files are JSON, everything else CSV.
    pub fn guess(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// File contents together with their SHA-256 digest.
pub struct RawInput {
    pub text: String,
    pub sha256: String,
}

pub fn read_input(path: &Path) -> Result<RawInput, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::Io(format!("{}: not UTF-8: {e}", path.display())))?;
    Ok(RawInput { text, sha256 })
}

fn parse_error(line: u64, column: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn parse_csv(text: &str) -> Result<SampleSet, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(&e))?.clone();

    let mut f_col = None;
    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    for (col, name) in headers.iter().enumerate() {
        if name == "f" {
            if f_col.replace(col).is_some() {
                return Err(parse_error(1, col as u64 + 1, "duplicate column f"));
            }
        } else if let Some(k) = name.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
            x_cols.push((k, col));
        } else {
            return Err(parse_error(
                1,
                col as u64 + 1,
                format!("unexpected column {name:?}"),
            ));
        }
    }
    let f_col = f_col.ok_or_else(|| parse_error(1, 1, "missing column f"))?;
    x_cols.sort_unstable();
    if x_cols.is_empty() || x_cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
        return Err(parse_error(1, 1, "location columns must be x1..xd"));
    }

    let mut locations = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| -> Result<f64, CliError> {
            let raw = record.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_error(
                    line,
                    col as u64 + 1,
                    format!("expected a finite number, found {raw:?}"),
                )),
            }
        };
        let row = x_cols
            .iter()
            .map(|(_, col)| field(*col))
            .collect::<Result<Vec<_>, _>>()?;
        values.push(field(f_col)?);
        locations.push(row);
    }
    SampleSet::new(locations, values).map_err(CliError::from)
}

fn csv_error(e: &csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(line, 1, e.to_string())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonLocations {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonInput {
    x: JsonLocations,
    f: Vec<f64>,
}

pub fn parse_json(text: &str) -> Result<SampleSet, CliError> {
    let input: JsonInput = serde_json::from_str(text)
        .map_err(|e| parse_error(e.line() as u64, e.column() as u64, e.to_string()))?;
    let locations = match input.x {
        JsonLocations::Rows(rows) => rows,
        JsonLocations::Flat(xs) => xs.into_iter().map(|x| vec![x]).collect(),
    };
    SampleSet::new(locations, input.f).map_err(CliError::from)
}

pub fn parse_samples(text: &str, format: Format) -> Result<SampleSet, CliError> {
    match format {
        Format::Csv => parse_csv(text),
        Format::Json => parse_json(text),
    }
}

/// Task from a JSON file, or one of the built-in tasks `builtin:illustration`
/// and `builtin:rare-event`. Returns the task and a content hash.
pub fn load_task(spec: &str) -> Result<(Task, String), CliError> {
    let (task, hash) = match spec {
        "builtin:illustration" => (Task::illustration(), None),
        "builtin:rare-event" => (Task::rare_event(), None),
        path => {
            let raw = read_input(Path::new(path))?;
            let task: Task = serde_json::from_str(&raw.text)
                .map_err(|e| parse_error(e.line() as u64, e.column() as u64, e.to_string()))?;
            (task, Some(raw.sha256))
        }
    };
    task.validate()?;
    let hash = match hash {
        Some(h) => h,
        None => hex::encode(Sha256::digest(
            serde_json::to_vec(&task).expect("task serializes"),
        )),
    };
    Ok((task, hash))
}
