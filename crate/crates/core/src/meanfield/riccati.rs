use nalgebra::DMatrix;

use super::MeanfieldError;
use crate::numerics::{
    integrate, is_psd, symmetrize, Direction, MatrixPath, Schedule, Stage, TimeGrid, PSD_REL_TOL,
};
use crate::scenario::{AggregateSystem, ScenarioParams};

/// Asymmetry accepted on a solved Riccati path.
pub const ASYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiccatiSource {
    Aggregate,
    Minor,
    Centralized,
}

/// Symmetric solution of a matrix Riccati equation on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiPath {
    pub p: MatrixPath,
    pub source: RiccatiSource,
}

impl RiccatiPath {
    /// Smallest eigenvalue over all nodes.
    pub fn min_eigenvalue(&self) -> f64 {
        self.p
            .nodes()
            .iter()
            .map(|m| {
                is_psd(m, PSD_REL_TOL)
                    .map(|c| c.min_eigenvalue)
                    .unwrap_or(f64::NEG_INFINITY)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Every node passes the PSD test.
    pub fn is_psd(&self) -> bool {
        self.p
            .nodes()
            .iter()
            .all(|m| is_psd(m, PSD_REL_TOL).map(|c| c.is_psd()).unwrap_or(false))
    }
}

/// `dP/dt = -(P A + Aᵀ P - P S P + Q)` at one stage.
pub fn riccati_field(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> DMatrix<f64> {
    let pa = p * a;
    let ps = p * s;
    -(&pa + pa.transpose() - ps * p + q)
}

/// Backward solution of `-P' = PA + AᵀP - PSP + Q`, `P(T) = qf`,
/// symmetrized after every step.
pub fn solve_riccati(
    grid: &TimeGrid,
    a: &Schedule<DMatrix<f64>>,
    s: &Schedule<DMatrix<f64>>,
    q: &Schedule<DMatrix<f64>>,
    qf: &DMatrix<f64>,
    source: RiccatiSource,
) -> Result<RiccatiPath, MeanfieldError> {
    for sched in [a, s, q] {
        grid.check_breakpoints(sched.breakpoints())?;
    }
    let field = |st: Stage, p: &DMatrix<f64>| {
        riccati_field(p, a.at_stage(grid, st), s.at_stage(grid, st), q.at_stage(grid, st))
    };
    let nodes = integrate(grid, Direction::Backward, symmetrize(qf), field, |p| {
        *p = symmetrize(p)
    })?;
    let path = MatrixPath::new(*grid, nodes)?.with_hermite_mids(field);
    let path = path.map(symmetrize);
    let asym = path.max_asymmetry();
    if asym > ASYMMETRY_TOL {
        return Err(MeanfieldError::Asymmetry { asymmetry: asym });
    }
    Ok(RiccatiPath { p: path, source })
}

/// Aggregate Riccati for `Z = (X0, m)`: running weight `ℚ0`, terminal `ℚ0f`.
pub fn solve_aggregate_riccati(
    agg: &AggregateSystem,
    grid: &TimeGrid,
) -> Result<RiccatiPath, MeanfieldError> {
    solve_riccati(grid, &agg.abb, &agg.sbb, &agg.qbb0, &agg.qbb0f, RiccatiSource::Aggregate)
}

/// Minor Riccati `P_λ` and the noise integrand `ζ_b = -P_λ D`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinorRiccati {
    pub p_lambda: RiccatiPath,
    /// `-P_λ(t) D(t)` at nodes, with `D` read by left limit.
    pub zeta_b: MatrixPath,
}

impl MinorRiccati {
    /// Largest entry of `ζ_b + P_λ D` over the nodes.
    pub fn zeta_identity_residual(&self, params: &ScenarioParams) -> f64 {
        let grid = self.p_lambda.p.grid();
        (0..grid.node_count())
            .map(|k| {
                let d = params.coefficients.d.at_stage(grid, grid.node_stage(k));
                (self.zeta_b.node(k) + self.p_lambda.p.node(k) * d).amax()
            })
            .fold(0.0, f64::max)
    }
}

pub fn solve_minor_riccati(
    params: &ScenarioParams,
    agg: &AggregateSystem,
    grid: &TimeGrid,
) -> Result<MinorRiccati, MeanfieldError> {
    let lambda = params.lambda;
    let c = &params.coefficients;
    let q = c.q.map(|m| m * lambda);
    let p_lambda = solve_riccati(grid, &c.a, &agg.s_minor, &q, &(&params.terminal.qf * lambda), RiccatiSource::Minor)?;
    let nodes = (0..grid.node_count())
        .map(|k| -(p_lambda.p.node(k) * c.d.at_stage(grid, grid.node_stage(k))))
        .collect();
    let zeta_b = MatrixPath::new(*grid, nodes)?;
    Ok(MinorRiccati { p_lambda, zeta_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{assemble_aggregate, builtin, derive_coefficients};

    fn s(x: f64) -> Schedule<DMatrix<f64>> {
        Schedule::constant(DMatrix::from_element(1, 1, x))
    }

    #[test]
    fn no_dynamics_keeps_terminal_weight() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let z = Schedule::constant(DMatrix::zeros(2, 2));
        let r = solve_riccati(&g, &z, &z, &z, &DMatrix::identity(2, 2), RiccatiSource::Aggregate).unwrap();
        for k in 0..g.node_count() {
            assert_eq!(r.p.node(k), &DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn scalar_closed_form() {
        // -P' = -P², P(1) = 1  =>  P(t) = 1/(2 - t)
        let g = TimeGrid::new(1.0, 10_000).unwrap();
        let r = solve_riccati(&g, &s(0.0), &s(1.0), &s(0.0), &DMatrix::from_element(1, 1, 1.0), RiccatiSource::Minor)
            .unwrap();
        let err = (0..g.node_count())
            .map(|k| (r.p.node(k)[0] - 1.0 / (2.0 - g.node(k))).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-8, "{err}");
        assert!((r.p.node(0)[0] - 0.5).abs() <= 1e-8);
    }

    #[test]
    fn pure_integration() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let r = solve_riccati(&g, &s(0.0), &s(0.0), &s(1.0), &DMatrix::zeros(1, 1), RiccatiSource::Minor).unwrap();
        let err = (0..g.node_count())
            .map(|k| (r.p.node(k)[0] - (1.0 - g.node(k))).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn canonical_paths_are_symmetric_psd() {
        let p = builtin::canonical();
        let agg = assemble_aggregate(&p, &derive_coefficients(&p)).unwrap();
        let g = p.grid(2000).unwrap();
        let big = solve_aggregate_riccati(&agg, &g).unwrap();
        assert!(big.p.max_asymmetry() <= 1e-12);
        assert!(big.is_psd());
        let minor = solve_minor_riccati(&p, &agg, &g).unwrap();
        assert!(minor.p_lambda.is_psd());
        assert_eq!(minor.zeta_identity_residual(&p), 0.0);
    }

    #[test]
    fn minor_identity_terminal_without_dynamics() {
        let mut p = builtin::decoupled();
        let c = &mut p.coefficients;
        c.a = s(0.0);
        c.b = s(0.0);
        c.q = s(0.0);
        p.terminal.qf = DMatrix::identity(1, 1);
        let agg = assemble_aggregate(&p, &derive_coefficients(&p)).unwrap();
        let g = p.grid(20).unwrap();
        let m = solve_minor_riccati(&p, &agg, &g).unwrap();
        for k in 0..g.node_count() {
            assert_eq!(m.p_lambda.p.node(k)[0], 1.0);
            assert_eq!(m.zeta_b.node(k)[0], -0.2);
        }
    }

    #[test]
    fn doubling_lambda_doubles_uncontrolled_solution() {
        let mut p = builtin::canonical();
        p.coefficients.b = s(0.0);
        let g = p.grid(200).unwrap();
        let solve = |p: &ScenarioParams| {
            let agg = assemble_aggregate(p, &derive_coefficients(p)).unwrap();
            solve_minor_riccati(p, &agg, &g).unwrap().p_lambda.p
        };
        let one = solve(&p);
        let two = solve(&p.with_lambda(2.0));
        assert!(two.sup_diff(&one.map(|m| m * 2.0)) < 1e-14);
    }

    #[test]
    fn larger_weight_gives_larger_solution() {
        let p = builtin::canonical();
        let mut agg = assemble_aggregate(&p, &derive_coefficients(&p)).unwrap();
        let g = p.grid(400).unwrap();
        let base = solve_aggregate_riccati(&agg, &g).unwrap();
        agg.qbb0 = agg.qbb0.map(|q| q + DMatrix::identity(2, 2) * 0.1);
        let bigger = solve_aggregate_riccati(&agg, &g).unwrap();
        for k in 0..g.node_count() {
            let diff = bigger.p.node(k) - base.p.node(k);
            assert!(is_psd(&symmetrize(&diff), PSD_REL_TOL).unwrap().is_psd());
        }
    }
}
