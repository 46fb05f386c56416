//! Exact optimum of the finite-population social problem, used as the
//! benchmark for the decentralized law.

mod joint;
mod solve;
mod stationarity;

pub use joint::{
    assemble_joint, assemble_joint_capped, assemble_social_cost, JointLQ, JointPiece, SocialCost,
    StackedCost, JOINT_DIM_CAP,
};
pub use solve::{optimal_cost, solve_centralized, CentralizedSolution};
pub use stationarity::{
    centralized_stationarity_check, perturbation_directions, DirectionCheck, Perturbation,
    StationarityReport, PERTURBATION_SEGMENTS,
};

use thiserror::Error;

use crate::numerics::NumericsError;
use crate::scenario::ScenarioError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CentralizedError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("population size must be at least 1")]
    InvalidPopulation,
    #[error("stacked dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),
    #[error("centralized Riccati solution lost semi-definiteness at node {node}")]
    NotPsd { node: usize },
    #[error("centralized Riccati asymmetry {asymmetry:e} exceeds tolerance")]
    Asymmetry { asymmetry: f64 },
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}
