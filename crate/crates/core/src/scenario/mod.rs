//! Model data: loading, validation, and the algebra that turns the primitive
//! coefficients into the blocks the solvers consume.

mod aggregate;
pub mod builtin;
mod derive;
mod params;
mod parse;
mod psd;
mod validate;

pub use aggregate::{assemble_aggregate, AggregateSystem};
pub use derive::{cost_terms, derive_coefficients, CostTerms, DerivedCoefficients};
pub use params::{
    CoefficientPaths, Coefficients, Dims, Limits, MinorInit, ScenarioParams, Shape, Terminal,
};
pub use parse::{load_scenario, parse_scenario};
pub use psd::{
    check_q0_psd, CertificateEntry, CertificateOutcome, PsdCertificate, RECONSTRUCTION_TOL,
};
pub use validate::{validate, ValidationReport, Violation};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed scenario document: {0}")]
    Syntax(String),
    #[error("missing field {0}")]
    MissingField(String),
    #[error("{field}: expected {expected}, found {found}")]
    WrongType {
        field: String,
        expected: &'static str,
        found: String,
    },
    #[error("{field}: dimension mismatch, expected {}x{}, found {}x{}", expected.0, expected.1, found.0, found.1)]
    DimensionMismatch {
        field: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{field}: {reason}")]
    InvalidSegments { field: String, reason: String },
    #[error("{field}: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
