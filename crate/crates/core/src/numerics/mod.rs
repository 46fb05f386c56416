//! Fixed-step integrators, time grids, piecewise-constant schedules and
//! the small amount of dense/structured linear algebra the solvers share.

mod block;
mod grid;
mod linalg;
mod ode;
mod path;
mod schedule;

pub use block::{BlockOperator, NoiseLoading};
pub use grid::{Stage, StagePoint, TimeGrid};
pub use linalg::{
    asymmetry, block_diag, frobenius, hstack, is_psd, passes_shifted_cholesky, psd_tolerance, sym_sqrt, symmetrize,
    vstack, PsdCheck, PSD_REL_TOL,
};
pub use ode::{integrate, integrate_matrix_ode, integrate_observed, Direction, OdeState};
pub use path::{hermite_midpoint, MatrixPath};
pub use schedule::Schedule;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("breakpoint t={t} is not a node of a grid with {steps} steps")]
    OffGridBreakpoint { t: f64, steps: usize },
    #[error("integration diverged at node {node}")]
    Divergence { node: usize },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
