use nalgebra::DMatrix;

use super::cost::CostFunctional;
use super::sde::AffineSde;
use super::EvaluationError;
use crate::numerics::{
    integrate_observed, is_psd, passes_shifted_cholesky, symmetrize, Direction, Stage, TimeGrid,
    PSD_REL_TOL,
};

/// Above this dimension the full covariance is PSD-tested on a subsample of
/// nodes only.
pub const DENSE_PSD_CHECK_DIM: usize = 64;
const SAMPLED_PSD_NODES: usize = 20;

/// Mean and covariance of an affine SDE at every node, with the running
/// cost accumulated alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPath {
    pub grid: TimeGrid,
    pub mean: Vec<DMatrix<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    /// `∫_0^{t_k} E[running cost] dt`; zero when no cost was supplied.
    pub running_cost: Vec<f64>,
}

/// End state of a streamed propagation.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub running_cost: f64,
    pub terminal_mean: DMatrix<f64>,
    pub terminal_cov: DMatrix<f64>,
    /// Nodes whose full covariance passed the PSD test.
    pub psd_checked_nodes: usize,
}

type MomentState = (DMatrix<f64>, DMatrix<f64>, f64);

fn psd_check_due(dim: usize, steps: usize, k: usize) -> bool {
    if dim <= DENSE_PSD_CHECK_DIM {
        return true;
    }
    let stride = steps.div_ceil(SAMPLED_PSD_NODES).max(1);
    k.is_multiple_of(stride) || k == steps
}

/// Moments at one node as seen by a [`stream_moments`] observer.
pub struct NodeMoments<'a> {
    pub node: usize,
    pub mean: &'a DMatrix<f64>,
    pub cov: &'a DMatrix<f64>,
    /// Running cost accumulated up to this node.
    pub running_cost: f64,
}

/// Propagates `μ' = Aμ + b`, `Σ' = AΣ + ΣAᵀ + LLᵀ` and the expected running
/// cost by RK4, calling `observe` at every node. The running cost is
/// integrated as an extra ODE component, so it inherits the RK4 order.
pub fn stream_moments<S, O>(
    sys: &S,
    cost: Option<&dyn CostFunctional>,
    grid: &TimeGrid,
    mut observe: O,
) -> Result<MomentSummary, EvaluationError>
where
    S: AffineSde + ?Sized,
    O: FnMut(NodeMoments<'_>),
{
    let dim = sys.dim();
    let init: MomentState = (sys.initial_state(), DMatrix::zeros(dim, dim), 0.0);
    let field = |st: Stage, y: &MomentState| {
        let (mean, cov, _) = y;
        let c = sys.coefficients(st);
        let dmean = c.drift.apply(mean) + &c.offset;
        // Σ stays symmetric, so Σ Aᵀ gives both halves of the Lyapunov term
        let ca = c.drift.mul_right_transpose(cov);
        let mut dcov = ca.transpose() + &ca;
        c.noise.add_gram_to(&mut dcov);
        let dj = cost.map_or(0.0, |f| f.running_expected(st, mean, cov));
        (dmean, dcov, dj)
    };
    let mut failure = None;
    let mut checked = 0;
    let steps = grid.steps();
    let last = integrate_observed(
        grid,
        Direction::Forward,
        init,
        field,
        |y| y.1 = symmetrize(&y.1),
        |k, y| {
            if failure.is_none() && psd_check_due(dim, steps, k) {
                if passes_shifted_cholesky(&y.1, PSD_REL_TOL) {
                    checked += 1;
                } else {
                    let min = is_psd(&y.1, PSD_REL_TOL).map_or(f64::NEG_INFINITY, |c| c.min_eigenvalue);
                    failure = Some((k, min));
                }
            }
            observe(NodeMoments {
                node: k,
                mean: &y.0,
                cov: &y.1,
                running_cost: y.2,
            });
        },
    )?;
    if let Some((node, min_eigenvalue)) = failure {
        return Err(EvaluationError::PsdLoss { node, min_eigenvalue });
    }
    Ok(MomentSummary {
        running_cost: last.2,
        terminal_mean: last.0,
        terminal_cov: last.1,
        psd_checked_nodes: checked,
    })
}

/// Stores the moments at every node; meant for small systems.
pub fn propagate_moments<S: AffineSde + ?Sized>(
    sys: &S,
    cost: Option<&dyn CostFunctional>,
    grid: &TimeGrid,
) -> Result<MomentPath, EvaluationError> {
    let mut mean = Vec::with_capacity(grid.node_count());
    let mut cov = Vec::with_capacity(grid.node_count());
    let mut running_cost = Vec::with_capacity(grid.node_count());
    stream_moments(sys, cost, grid, |m| {
        mean.push(m.mean.clone());
        cov.push(m.cov.clone());
        running_cost.push(m.running_cost);
    })?;
    Ok(MomentPath {
        grid: *grid,
        mean,
        cov,
        running_cost,
    })
}

/// Expected total cost: the accumulated running part plus the terminal term.
pub fn social_cost_exact(moments: &MomentPath, cost: &dyn CostFunctional) -> f64 {
    let k = moments.grid.steps();
    moments.running_cost[k] + cost.terminal_expected(&moments.mean[k], &moments.cov[k])
}

/// Same expectation with the running part from the trapezoid rule on node
/// values (left-limit coefficients at nodes). Second order in `dt`.
pub fn trapezoid_cost(moments: &MomentPath, cost: &dyn CostFunctional) -> f64 {
    let g = &moments.grid;
    let k = g.steps();
    let vals: Vec<f64> = (0..=k)
        .map(|j| cost.running_expected(g.node_stage(j), &moments.mean[j], &moments.cov[j]))
        .collect();
    let inner: f64 = vals[1..k].iter().sum();
    let running = g.dt() * (0.5 * (vals[0] + vals[k]) + inner);
    running + cost.terminal_expected(&moments.mean[k], &moments.cov[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::cost::{DenseCost, QuadForm};
    use crate::evaluation::sde::{DenseSde, DriftOp, Loading, StageCoefficients};

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn scalar_sde(a: f64, b: f64, d: f64, x0: f64) -> DenseSde<impl Fn(Stage) -> StageCoefficients + Sync> {
        DenseSde::new(scalar(x0), move |_| StageCoefficients {
            drift: DriftOp::Dense(scalar(a)),
            offset: scalar(b),
            noise: Loading::Dense(scalar(d)),
        })
    }

    #[test]
    fn frozen_system_keeps_moments() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let m = propagate_moments(&scalar_sde(0.0, 0.0, 0.0, 0.7), None, &g).unwrap();
        assert!(m.mean.iter().all(|x| x[0] == 0.7));
        assert!(m.cov.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn brownian_variance() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let m = propagate_moments(&scalar_sde(0.0, 0.0, 1.0, 0.0), None, &g).unwrap();
        assert!((m.cov[100][0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ou_variance_closed_form() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let m = propagate_moments(&scalar_sde(-1.0, 0.0, 1.0, 0.0), None, &g).unwrap();
        for k in [100, 500, 1000] {
            let t = g.node(k);
            assert!((m.cov[k][0] - (1.0 - (-2.0 * t).exp()) / 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn accumulated_cost_matches_closed_form() {
        // E ∫ X² dt for dX = dW, X0 = 1: ∫ (1 + t) dt = 1.5
        let g = TimeGrid::new(1.0, 50).unwrap();
        let mut w = QuadForm::zero(1);
        w.w = scalar(1.0);
        let cost = DenseCost::new(move |_| w.clone(), QuadForm::zero(1));
        let m = propagate_moments(&scalar_sde(0.0, 0.0, 1.0, 1.0), Some(&cost), &g).unwrap();
        assert!((social_cost_exact(&m, &cost) - 1.5).abs() < 1e-13);
        assert!((trapezoid_cost(&m, &cost) - 1.5).abs() < 1e-13);
    }

    #[test]
    fn deterministic_cost_reduces_to_plugging_in_the_mean() {
        let g = TimeGrid::new(1.0, 200).unwrap();
        let mut w = QuadForm::zero(1);
        w.w = scalar(2.0);
        w.v = scalar(-0.5);
        w.c = 0.1;
        let wc = w.clone();
        let cost = DenseCost::new(move |_| wc.clone(), w.clone());
        let m = propagate_moments(&scalar_sde(-0.5, 0.3, 0.0, 1.0), Some(&cost), &g).unwrap();
        let x = |t: f64| 0.6 + 0.4 * (-0.5 * t).exp();
        // ∫ 2x² - x + 0.1 dt by a fine Simpson rule
        let n = 2000;
        let h = 1.0 / n as f64;
        let f = |t: f64| 2.0 * x(t).powi(2) - x(t) + 0.1;
        let simpson: f64 = (0..n).map(|i| {
            let a = i as f64 * h;
            h / 6.0 * (f(a) + 4.0 * f(a + h / 2.0) + f(a + h))
        }).sum();
        let want = simpson + f(1.0);
        assert!((social_cost_exact(&m, &cost) - want).abs() < 1e-10);
    }
}
