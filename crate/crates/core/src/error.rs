use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("arity {k} does not divide d*n = {dn}")]
    Divisibility { k: usize, dn: usize },
    #[error("no simple graph after {0} tries")]
    RetryLimit(usize),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("enumeration of {configs} configurations exceeds guard {guard}")]
    SizeGuard { configs: f64, guard: f64 },
    #[error("event has zero weight")]
    ZeroWeight,
    #[error("zero normalizer on edge ({constraint}, slot {slot})")]
    Degenerate { constraint: usize, slot: usize },
    #[error("message sets are indexed by different edges")]
    IndexMismatch,
    #[error("all rows received zero weight in a join")]
    DegenerateJoin,
    #[error("cavity at variable {var} has degree {degree}, expected {expected}")]
    CavityDegree { var: usize, degree: usize, expected: usize },
    #[error("rejection fraction {0} exceeds the configured cap")]
    RejectionCap(f64),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by size or resource guards rather than bad input.
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Error::SizeGuard { .. } | Error::RetryLimit(_) | Error::RejectionCap(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
