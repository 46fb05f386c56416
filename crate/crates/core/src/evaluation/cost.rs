use nalgebra::DMatrix;

use crate::numerics::Stage;

/// `xᵀ W x + 2 vᵀ x + c`
#[derive(Clone, Debug, PartialEq)]
pub struct QuadForm {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub c: f64,
}

impl QuadForm {
    pub fn zero(dim: usize) -> Self {
        Self {
            w: DMatrix::zeros(dim, dim),
            v: DMatrix::zeros(dim, 1),
            c: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Adds `(L x + l)ᵀ M (L x + l)`.
    pub fn add_affine_square(&mut self, l: &DMatrix<f64>, off: &DMatrix<f64>, m: &DMatrix<f64>) {
        let ml = m * l;
        self.w.gemm_tr(1.0, l, &ml, 1.0);
        self.v.gemm_tr(1.0, &ml, off, 1.0);
        self.c += (off.transpose() * m * off)[0];
    }

    pub fn eval(&self, x: &DMatrix<f64>) -> f64 {
        (x.transpose() * &self.w * x)[0] + 2.0 * self.v.dot(x) + self.c
    }

    /// `E[xᵀ W x + 2 vᵀ x + c]` for `x ~ (mean, cov)`.
    pub fn expect(&self, mean: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
        self.w.dot(cov) + self.eval(mean)
    }
}

/// Running plus terminal quadratic cost of an affine SDE.
pub trait CostFunctional: Sync {
    /// Running integrand as a dense form on the full state.
    fn running_form(&self, st: Stage) -> QuadForm;
    fn terminal_form(&self) -> QuadForm;

    fn running_expected(&self, st: Stage, mean: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
        self.running_form(st).expect(mean, cov)
    }

    fn terminal_expected(&self, mean: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
        self.terminal_form().expect(mean, cov)
    }
}

/// Cost given by a running-form closure and a terminal form.
pub struct DenseCost<F> {
    running: F,
    terminal: QuadForm,
}

impl<F> DenseCost<F>
where
    F: Fn(Stage) -> QuadForm + Sync,
{
    pub fn new(running: F, terminal: QuadForm) -> Self {
        Self { running, terminal }
    }
}

impl<F> CostFunctional for DenseCost<F>
where
    F: Fn(Stage) -> QuadForm + Sync,
{
    fn running_form(&self, st: Stage) -> QuadForm {
        (self.running)(st)
    }

    fn terminal_form(&self) -> QuadForm {
        self.terminal.clone()
    }
}
