use nalgebra::DMatrix;

use crate::numerics::{BlockOperator, NoiseLoading, Stage};

/// Drift matrix of an affine SDE, dense or block-structured.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftOp {
    Dense(DMatrix<f64>),
    Block(BlockOperator),
}

impl DriftOp {
    pub fn dim(&self) -> usize {
        match self {
            DriftOp::Dense(m) => m.nrows(),
            DriftOp::Block(b) => b.dim(),
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            DriftOp::Dense(m) => m * x,
            DriftOp::Block(b) => b.apply(x),
        }
    }

    /// `x Aᵀ`
    pub fn mul_right_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            DriftOp::Dense(m) => x * m.transpose(),
            DriftOp::Block(b) => b.mul_right_transpose(x),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            DriftOp::Dense(m) => m.clone(),
            DriftOp::Block(b) => b.to_dense(),
        }
    }
}

/// Diffusion loading, one column per scalar Brownian motion.
#[derive(Clone, Debug, PartialEq)]
pub enum Loading {
    Dense(DMatrix<f64>),
    Block(NoiseLoading),
}

impl Loading {
    /// `out += L Lᵀ`
    pub fn add_gram_to(&self, out: &mut DMatrix<f64>) {
        match self {
            Loading::Dense(l) => out.gemm_tr(1.0, l, l, 1.0),
            Loading::Block(b) => b.add_gram_to(out),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Loading::Dense(l) => l.clone(),
            Loading::Block(b) => b.to_dense(),
        }
    }
}

/// `dx = (A x + b) dt + L dW` frozen at one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageCoefficients {
    pub drift: DriftOp,
    pub offset: DMatrix<f64>,
    pub noise: Loading,
}

/// Affine SDE with a deterministic initial state.
pub trait AffineSde: Sync {
    fn dim(&self) -> usize;
    fn initial_state(&self) -> DMatrix<f64>;
    fn coefficients(&self, st: Stage) -> StageCoefficients;
}

/// Affine SDE given by a coefficient closure.
pub struct DenseSde<F> {
    x0: DMatrix<f64>,
    coefficients: F,
}

impl<F> DenseSde<F>
where
    F: Fn(Stage) -> StageCoefficients + Sync,
{
    pub fn new(x0: DMatrix<f64>, coefficients: F) -> Self {
        Self { x0, coefficients }
    }
}

impl<F> AffineSde for DenseSde<F>
where
    F: Fn(Stage) -> StageCoefficients + Sync,
{
    fn dim(&self) -> usize {
        self.x0.nrows()
    }

    fn initial_state(&self) -> DMatrix<f64> {
        self.x0.clone()
    }

    fn coefficients(&self, st: Stage) -> StageCoefficients {
        (self.coefficients)(st)
    }
}
