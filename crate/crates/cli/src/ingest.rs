//! CSV ingestion with optional dichotomization of continuous columns.

use std::path::PathBuf;

use ivnnt_core::domain::validate;
use ivnnt_core::error::ValidationError;
use ivnnt_core::ObservationSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tokens read as missing values; rows containing them are dropped.
pub const MISSING_TOKENS: [&str; 5] = ["", "NA", "NaN", "nan", "."];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Values at or above the threshold map to 1.
    #[serde(rename = "ge_is_exposed", alias = "ge")]
    GeIsOne,
    /// Values at or below the threshold map to 1.
    #[serde(rename = "le_is_exposed", alias = "le")]
    LeIsOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub direction: Direction,
}

impl Threshold {
    pub fn apply(&self, x: f64) -> bool {
        match self.direction {
            Direction::GeIsOne => x >= self.value,
            Direction::LeIsOne => x <= self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSpec {
    pub path: PathBuf,
    pub outcome_column: String,
    pub exposure_column: String,
    pub instrument_column: String,
    pub outcome_threshold: Option<Threshold>,
    pub exposure_threshold: Option<Threshold>,
    pub instrument_threshold: Option<Threshold>,
    /// Without a header row, column names are zero-based positions.
    pub header: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedRow {
    /// Line number in the file, header included.
    pub line: u64,
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IngestReport {
    pub n_read: usize,
    pub n_kept: usize,
    pub dropped: Vec<DroppedRow>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("reading {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("column `{0}` is not present")]
    MissingColumn(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    ParseError { line: u64, column: String, value: String },
    #[error("line {line}, column `{column}`: `{value}` is not 0 or 1 and no threshold is configured")]
    NotBinary { line: u64, column: String, value: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

enum Cell {
    Value(i64),
    Missing,
}

fn read_cell(raw: &str, threshold: Option<Threshold>, line: u64, column: &str) -> Result<Cell, IngestError> {
    let raw = raw.trim();
    if MISSING_TOKENS.contains(&raw) {
        return Ok(Cell::Missing);
    }
    let x: f64 = raw.parse().map_err(|_| IngestError::ParseError {
        line,
        column: column.to_owned(),
        value: raw.to_owned(),
    })?;
    match threshold {
        Some(t) => Ok(Cell::Value(i64::from(t.apply(x)))),
        None if x == 0.0 || x == 1.0 => Ok(Cell::Value(x as i64)),
        None => Err(IngestError::NotBinary { line, column: column.to_owned(), value: raw.to_owned() }),
    }
}

/// Reads `(instrument, exposure, outcome)` triples, drops rows with missing
/// values, and validates the result.
pub fn ingest(spec: &IngestSpec) -> Result<(ObservationSet, IngestReport), IngestError> {
    if !spec.path.is_file() {
        return Err(IngestError::FileNotFound(spec.path.clone()));
    }
    let csv_err = |source| IngestError::Csv { path: spec.path.clone(), source };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(spec.header)
        .trim(csv::Trim::All)
        .from_path(&spec.path)
        .map_err(csv_err)?;

    let columns = [
        (&spec.instrument_column, spec.instrument_threshold),
        (&spec.exposure_column, spec.exposure_threshold),
        (&spec.outcome_column, spec.outcome_threshold),
    ];
    let headers = if spec.header { Some(reader.headers().map_err(csv_err)?.clone()) } else { None };
    let mut positions = [0usize; 3];
    for (slot, (name, _)) in positions.iter_mut().zip(&columns) {
        *slot = match &headers {
            Some(h) => h.iter().position(|c| c == name.as_str()),
            None => name.parse().ok(),
        }
        .ok_or_else(|| IngestError::MissingColumn((*name).clone()))?;
    }

    let mut report = IngestReport::default();
    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        report.n_read += 1;
        let mut triple = [0i64; 3];
        let mut missing = None;
        for (k, ((name, threshold), &pos)) in columns.iter().zip(&positions).enumerate() {
            let value = record.get(pos).ok_or_else(|| IngestError::MissingColumn((*name).clone()))?;
            match read_cell(value, *threshold, line, name)? {
                Cell::Value(v) => triple[k] = v,
                Cell::Missing => {
                    missing.get_or_insert(DroppedRow { line, column: (*name).clone(), value: value.to_owned() });
                }
            }
        }
        match missing {
            Some(d) => report.dropped.push(d),
            None => raw.push(triple),
        }
    }
    let data = validate(&raw)?;
    report.n_kept = data.n();
    Ok((data, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_inclusive() {
        let t = Threshold { value: 30.0, direction: Direction::GeIsOne };
        let got: Vec<bool> = [25.0, 31.0, 30.0, 45.0, 10.0, 60.0].iter().map(|&x| t.apply(x)).collect();
        assert_eq!(got, [false, true, true, true, false, true]);
        let t = Threshold { value: 0.0, direction: Direction::LeIsOne };
        assert!(t.apply(0.0) && !t.apply(1.0));
    }

    #[test]
    fn direction_names() {
        let t: Threshold = serde_json::from_str(r#"{"value": 30, "direction": "ge_is_exposed"}"#).unwrap();
        assert_eq!(t.direction, Direction::GeIsOne);
        let t: Threshold = serde_json::from_str(r#"{"value": 0, "direction": "le"}"#).unwrap();
        assert_eq!(t.direction, Direction::LeIsOne);
    }
}
