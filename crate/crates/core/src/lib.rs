//! Linear-quadratic mean-field social optimization with one major and many
//! minor players.
//!
//! The crate solves the limiting problem for decentralized strategies,
//! computes the exact centralized optimum of the finite population, and
//! evaluates the social cost of both so the optimality gap can be measured
//! as the population grows.

pub mod centralized;
pub mod cli;
pub mod evaluation;
pub mod meanfield;
pub mod numerics;
pub mod scenario;

use thiserror::Error;

/// Any failure of the library, tagged by the stage that produced it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("scenario: {0}")]
    Scenario(#[from] scenario::ScenarioError),
    #[error("numerics: {0}")]
    Numerics(#[from] numerics::NumericsError),
    #[error("limit solve: {0}")]
    Meanfield(#[from] meanfield::MeanfieldError),
    #[error("centralized solve: {0}")]
    Centralized(#[from] centralized::CentralizedError),
    #[error("evaluation: {0}")]
    Evaluation(#[from] evaluation::EvaluationError),
}
