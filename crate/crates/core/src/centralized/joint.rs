use nalgebra::DMatrix;

use super::CentralizedError;
use crate::numerics::{symmetrize, vstack, BlockOperator, NoiseLoading, Schedule, Stage, TimeGrid};
use crate::scenario::{Coefficients, Dims, ScenarioParams};

/// Quadratic cost `xᵀ Q x + 2 sᵀ x + c` over the stacked state.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedCost {
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub c: f64,
}

impl StackedCost {
    fn zero(dim: usize) -> Self {
        Self {
            q: DMatrix::zeros(dim, dim),
            s: DMatrix::zeros(dim, 1),
            c: 0.0,
        }
    }

    /// Adds `weight · |L x - eta|²_W`.
    fn add_square(&mut self, l: &DMatrix<f64>, eta: &DMatrix<f64>, w: &DMatrix<f64>, weight: f64) {
        let wl = w * l;
        self.q.gemm_tr(weight, l, &wl, 1.0);
        self.s.gemm_tr(-weight, &wl, eta, 1.0);
        self.c += weight * (eta.transpose() * w * eta)[0];
    }

    pub fn eval(&self, x: &DMatrix<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0] + 2.0 * self.s.dot(x) + self.c
    }
}

/// Running and terminal social cost over `x = (X0, X1, …, XN)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SocialCost {
    pub running: Schedule<StackedCost>,
    pub terminal: StackedCost,
}

/// Row map `x ↦ X_i - h_self X0 - h_mean X̄`; the major row (`i = 0`) has no `h_self` term.
fn tracking_row(d: Dims, n_minor: usize, i: usize, h_self: &DMatrix<f64>, h_mean: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.n;
    let mut l = DMatrix::zeros(n, (n_minor + 1) * n);
    let avg = h_mean / n_minor as f64;
    for j in 1..=n_minor {
        l.view_mut((0, j * n), (n, n)).copy_from(&(-&avg));
    }
    let mut own = l.view_mut((0, i * n), (n, n));
    own += DMatrix::identity(n, n);
    if i > 0 {
        l.view_mut((0, 0), (n, n)).copy_from(&(-h_self));
    }
    l
}

#[allow(clippy::too_many_arguments)]
fn stacked_cost(
    d: Dims,
    n_minor: usize,
    lambda: f64,
    h0: &DMatrix<f64>,
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    q0: &DMatrix<f64>,
    q: &DMatrix<f64>,
    eta0: &DMatrix<f64>,
    eta: &DMatrix<f64>,
) -> StackedCost {
    let dim = (n_minor + 1) * d.n;
    let mut cost = StackedCost::zero(dim);
    cost.add_square(&tracking_row(d, n_minor, 0, h1, h0), eta0, q0, 1.0);
    let w = lambda / n_minor as f64;
    for i in 1..=n_minor {
        cost.add_square(&tracking_row(d, n_minor, i, h1, h2), eta, q, w);
    }
    cost.q = symmetrize(&cost.q);
    cost
}

/// Expands the social cost `J0 + (λ/N) Σ Ji` into quadratic, linear and
/// constant parts over the stacked state.
pub fn assemble_social_cost(params: &ScenarioParams, n_minor: usize) -> Result<SocialCost, CentralizedError> {
    if n_minor == 0 {
        return Err(CentralizedError::InvalidPopulation);
    }
    let d = params.dims;
    let lam = params.lambda;
    let running = params.coefficients.merged().map(|c| {
        stacked_cost(d, n_minor, lam, &c.h0, &c.h1, &c.h2, &c.q0, &c.q, &c.eta0, &c.eta)
    });
    let t = &params.terminal;
    let terminal = stacked_cost(d, n_minor, lam, &t.h0f, &t.h1f, &t.h2f, &t.q0f, &t.qf, &t.eta0f, &t.etaf);
    Ok(SocialCost { running, terminal })
}

/// Coefficients of the stacked system on one constant piece.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPiece {
    /// Drift `Â`, stored with mean couplings.
    pub ahat: BlockOperator,
    /// `B̂ R̂⁻¹ B̂ᵀ` (block diagonal).
    pub srr: BlockOperator,
    pub noise: NoiseLoading,
    /// `D̂ D̂ᵀ`
    pub noise_gram: DMatrix<f64>,
    pub cost: StackedCost,
    coefficients: Coefficients,
}

/// Finite-population LQ problem over `x = (X0, X1, …, XN)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLQ {
    pub dims: Dims,
    pub n_minor: usize,
    pub lambda: f64,
    pub pieces: Schedule<JointPiece>,
    pub terminal: StackedCost,
    pub x_init: DMatrix<f64>,
}

fn spd_inverse(m: &DMatrix<f64>, field: &str) -> Result<DMatrix<f64>, CentralizedError> {
    m.clone()
        .cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| CentralizedError::NotPositiveDefinite(field.into()))
}

/// Default cap on the stacked dimension `(N+1)n`.
pub const JOINT_DIM_CAP: usize = 1024;

pub fn assemble_joint(params: &ScenarioParams, n_minor: usize) -> Result<JointLQ, CentralizedError> {
    assemble_joint_capped(params, n_minor, JOINT_DIM_CAP)
}

pub fn assemble_joint_capped(
    params: &ScenarioParams,
    n_minor: usize,
    cap: usize,
) -> Result<JointLQ, CentralizedError> {
    if n_minor == 0 {
        return Err(CentralizedError::InvalidPopulation);
    }
    let d = params.dims;
    let dim = (n_minor + 1) * d.n;
    if dim > cap {
        return Err(CentralizedError::DimensionCap { dim, cap });
    }
    let nb = n_minor + 1;
    let social = assemble_social_cost(params, n_minor)?;
    let merged = params.coefficients.merged();
    let mut segments = Vec::with_capacity(merged.len());
    for (j, (&t, c)) in merged.starts().iter().zip(merged.values()).enumerate() {
        let mut ahat = BlockOperator::new(d.n, nb);
        ahat.add_block(0, 0, c.a0.clone());
        ahat.add_mean(0..1, 1..nb, c.f0.clone());
        ahat.add_mean(1..nb, 1..nb, c.f.clone());
        for i in 1..nb {
            ahat.add_block(i, i, c.a.clone());
            ahat.add_block(i, 0, c.g.clone());
        }
        let s0 = &c.b0 * spd_inverse(&c.r0, "coefficients.R0")? * c.b0.transpose();
        let r_inv = spd_inverse(&c.r, "coefficients.R")? * (n_minor as f64 / params.lambda);
        let s = &c.b * r_inv * c.b.transpose();
        let mut srr = BlockOperator::new(d.n, nb);
        srr.add_block(0, 0, symmetrize(&s0));
        let mut noise = NoiseLoading::new(d.n, nb);
        noise.add_source(vec![(0, c.d0.clone())]);
        for i in 1..nb {
            srr.add_block(i, i, symmetrize(&s));
            noise.add_source(vec![(i, c.d.clone())]);
        }
        let mut noise_gram = DMatrix::zeros(dim, dim);
        noise.add_gram_to(&mut noise_gram);
        segments.push((
            t,
            JointPiece {
                ahat,
                srr,
                noise,
                noise_gram,
                cost: social.running.values()[j].clone(),
                coefficients: c.clone(),
            },
        ));
    }
    let pieces = Schedule::from_segments(segments)?;
    let minors = params.minor_initial_states(n_minor)?;
    let mut parts = vec![&params.z0];
    parts.extend(minors.iter());
    let x_init = vstack(&parts);
    Ok(JointLQ {
        dims: d,
        n_minor,
        lambda: params.lambda,
        pieces,
        terminal: social.terminal,
        x_init,
    })
}

impl JointLQ {
    pub fn dim(&self) -> usize {
        (self.n_minor + 1) * self.dims.n
    }

    pub fn control_dim(&self) -> usize {
        (self.n_minor + 1) * self.dims.n1
    }

    pub fn piece(&self, grid: &TimeGrid, st: Stage) -> &JointPiece {
        self.pieces.at_stage(grid, st)
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<(), CentralizedError> {
        grid.check_breakpoints(self.pieces.breakpoints())?;
        Ok(())
    }
}

impl JointPiece {
    pub fn ahat_dense(&self) -> DMatrix<f64> {
        self.ahat.to_dense()
    }

    fn block_diag_of(&self, n_minor: usize, major: &DMatrix<f64>, minor: &DMatrix<f64>) -> DMatrix<f64> {
        let mut parts = vec![major];
        parts.extend(std::iter::repeat_n(minor, n_minor));
        crate::numerics::block_diag(&parts)
    }

    /// `B̂ = blockdiag(B0, B, …, B)`
    pub fn bhat(&self, n_minor: usize) -> DMatrix<f64> {
        let c = &self.coefficients;
        self.block_diag_of(n_minor, &c.b0, &c.b)
    }

    /// `R̂ = blockdiag(R0, (λ/N)R, …)`
    pub fn rhat(&self, n_minor: usize, lambda: f64) -> DMatrix<f64> {
        let c = &self.coefficients;
        self.block_diag_of(n_minor, &c.r0, &(&c.r * (lambda / n_minor as f64)))
    }

    /// `D̂ = blockdiag(D0, D, …, D)`
    pub fn dhat(&self, n_minor: usize) -> DMatrix<f64> {
        let c = &self.coefficients;
        self.block_diag_of(n_minor, &c.d0, &c.d)
    }

    /// `R̂⁻¹ B̂ᵀ` as a dense matrix.
    pub fn gain_map(&self, n_minor: usize, lambda: f64) -> DMatrix<f64> {
        let r = self.rhat(n_minor, lambda);
        let b = self.bhat(n_minor);
        r.cholesky().expect("control weights checked at assembly").solve(&b.transpose())
    }
}
