use thiserror::Error;

use crate::config::ConfigIssue;
use crate::model::ModelViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid system model: {}", format_violations(.0))]
    Model(Vec<ModelViolation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("field error: {0}")]
    Field(String),

    /// Imaginary part of a quantity that must be real exceeded tolerance.
    #[error("consistency error at t = {t}: imaginary residual {residual:.3e} in {quantity}")]
    Consistency { quantity: &'static str, t: f64, residual: f64 },

    #[error("numerical blowup at step {step} (t = {t}); try a smaller dt")]
    NumericalBlowup { step: usize, t: f64 },

    #[error("record error: {0}")]
    Record(String),

    #[error("degenerate likelihood at t = {t}: normalizer {normalizer:.3e}")]
    DegenerateLikelihood { t: f64, normalizer: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    /// Malformed configuration text.
    #[error("parse error: {0}")]
    Parse(String),

    /// Every problem found in an otherwise well-formed configuration.
    #[error("invalid configuration: {}", format_issues(.0))]
    Validation(Vec<ConfigIssue>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for malformed or inconsistent inputs.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse(_) | Error::Validation(_) | Error::Model(_) | Error::Grid(_) | Error::Field(_) | Error::Record(_)
        )
    }

    /// True for failures caused by the integrator rather than by inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalBlowup { .. } | Error::Consistency { .. } | Error::DegenerateLikelihood { .. } => true,
            Error::Trajectory { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

fn format_issues(v: &[ConfigIssue]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

fn format_violations(v: &[ModelViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
