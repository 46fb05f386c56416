//! Exact and Monte Carlo evaluation of social costs for finite populations,
//! the mean-field approximation errors and the optimality gap.

mod augmented;
mod cost;
mod gap;
mod metrics;
mod moments;
mod sde;
mod simulate;

pub use augmented::{
    build_augmented, build_augmented_capped, AugmentedSystem, MacroForm, MacroMoments,
    RealSocialCost, AUGMENTED_DIM_CAP,
};
pub use cost::{CostFunctional, DenseCost, QuadForm};
pub use gap::{
    convergence_study, decentralized_cost, evaluate_population, loglog_slope, optimality_gap,
    ConvergenceStudy, CostReport, CSV_HEADER,
};
pub use metrics::{meanfield_error_metrics, ErrorMetrics, MetricsTracker};
pub use moments::{
    propagate_moments, social_cost_exact, stream_moments, trapezoid_cost, MomentPath,
    MomentSummary, NodeMoments, DENSE_PSD_CHECK_DIM,
};
pub use sde::{AffineSde, DenseSde, DriftOp, Loading, StageCoefficients};
pub use simulate::{simulate_paths, PathSummary, SimulationReport, SIMULATION_DIM_CAP};

use thiserror::Error;

use crate::centralized::CentralizedError;
use crate::meanfield::MeanfieldError;
use crate::numerics::NumericsError;
use crate::scenario::ScenarioError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("limit solve: {0}")]
    Meanfield(#[from] MeanfieldError),
    #[error("centralized solve: {0}")]
    Centralized(#[from] CentralizedError),
    #[error("augmented dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("covariance lost semi-definiteness at node {node} (min eigenvalue {min_eigenvalue:e})")]
    PsdLoss { node: usize, min_eigenvalue: f64 },
    #[error("path {path} became non-finite at step {step}")]
    NonFinitePath { path: usize, step: usize },
    #[error("{0}")]
    InvalidInput(String),
}
