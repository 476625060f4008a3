use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{function} is undefined at {value}")]
pub struct DomainError {
    pub function: &'static str,
    pub value: f64,
}

impl DomainError {
    pub fn new(function: &'static str, value: f64) -> Self {
        Self { function, value }
    }
}

/// One problem found while validating raw observations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationIssue {
    #[error("row {row}: value {value} in column {column} is not 0 or 1")]
    NonBinaryValue { row: usize, column: &'static str, value: i64 },
    #[error("no observations with z={z}, a={a}")]
    EmptyCell { z: u8, a: u8 },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Every issue found, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid observation set: {}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expected a vector of length {expected}, got {actual}")]
pub struct LengthMismatch {
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("outcome mean is exactly {mean} in cell z={z}, a={a}; the association model is not identified")]
    Separation { z: u8, a: u8, mean: f64 },
    #[error("exposure mean is exactly {mean} in instrument cell z={z}")]
    ExposureSeparation { z: u8, mean: f64 },
    #[error("no sign change of the estimating equation for psi{group} on [{lower}, {upper}]")]
    NoSolution { group: u8, lower: f64, upper: f64 },
    #[error("group a={0} has no observations")]
    GroupEmpty(u8),
    #[error("index component {0} is not finite")]
    NonFiniteTheta(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VarianceError {
    #[error("bread matrix condition number {0:.3e} is at or above the exclusion threshold")]
    Excluded(f64),
    #[error("estimating function is not finite at component {0} after perturbation")]
    NonFiniteEntry(usize),
    #[error("parameter component {0} is not finite")]
    NonFiniteTheta(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DgpError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("{} distinct solutions found; choose one explicitly", .0.len())]
    MultipleSolutions(Vec<[f64; 4]>),
}
