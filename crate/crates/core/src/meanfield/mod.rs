//! Limit problem: aggregate and minor Riccati equations, their offsets, the
//! decentralized feedback law and the fixed-point check.

mod consistency;
mod export;
mod law;
mod minor;
mod offset;
mod riccati;

pub use consistency::{consistency_residual, ConsistencyReport};
pub use export::solution_csv;
pub use law::{build_decentralized_law, DecentralizedLaw, StageGains};
pub use minor::{derive_minor_offset, matching_residual, MatchingResidual, MinorOffset};
pub use offset::{aggregate_offset_field, solve_aggregate_offset, AggregateOffset};
pub use riccati::{
    riccati_field, solve_aggregate_riccati, solve_minor_riccati, solve_riccati, MinorRiccati,
    RiccatiPath, RiccatiSource, ASYMMETRY_TOL,
};

use thiserror::Error;

use crate::numerics::{NumericsError, TimeGrid};
use crate::scenario::{
    assemble_aggregate, derive_coefficients, AggregateSystem, DerivedCoefficients, ScenarioError,
    ScenarioParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanfieldError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("grid mismatch: {0} lives on a different grid")]
    GridMismatch(String),
    #[error("Riccati path asymmetry {asymmetry:e} exceeds tolerance")]
    Asymmetry { asymmetry: f64 },
}

/// Every object produced by the limit solve.
#[derive(Clone, Debug)]
pub struct MeanFieldSolution {
    pub derived: DerivedCoefficients,
    pub aggregate: AggregateSystem,
    pub riccati: RiccatiPath,
    pub offset: AggregateOffset,
    pub minor: MinorRiccati,
    pub minor_offset: MinorOffset,
    pub law: DecentralizedLaw,
}

impl MeanFieldSolution {
    pub fn matching_residual(&self) -> Result<MatchingResidual, MeanfieldError> {
        matching_residual(
            self.law.params(),
            &self.derived,
            &self.aggregate,
            &self.riccati,
            &self.offset,
            &self.minor,
            &self.minor_offset,
        )
    }
}

/// Runs the full limit solve on `grid`.
pub fn solve_mean_field(
    params: &ScenarioParams,
    grid: &TimeGrid,
) -> Result<MeanFieldSolution, MeanfieldError> {
    params.check_grid(grid)?;
    let derived = derive_coefficients(params);
    let aggregate = assemble_aggregate(params, &derived)?;
    let riccati = solve_aggregate_riccati(&aggregate, grid)?;
    let offset = solve_aggregate_offset(&aggregate, &riccati, grid)?;
    let minor = solve_minor_riccati(params, &aggregate, grid)?;
    let minor_offset = derive_minor_offset(params, &derived, &aggregate, &riccati, &offset, &minor, grid)?;
    let law = build_decentralized_law(&riccati, &offset, &minor, &minor_offset, params, &aggregate)?;
    Ok(MeanFieldSolution {
        derived,
        aggregate,
        riccati,
        offset,
        minor,
        minor_offset,
        law,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{hstack, Schedule, StagePoint};
    use crate::scenario::builtin;
    use nalgebra::DMatrix;

    #[test]
    fn canonical_gain_identity_and_matching() {
        let p = builtin::canonical();
        let g = p.grid(2000).unwrap();
        let sol = solve_mean_field(&p, &g).unwrap();
        let (m, v) = sol.law.gain_identity_residual();
        assert!(m <= 1e-8 && v <= 1e-8, "{m} {v}");
        let r = sol.matching_residual().unwrap();
        assert!(r.max() <= 1e-8, "{r:?}");
        let n = 1;
        let s_end = sol.minor_offset.s_mat.terminal();
        let want = -hstack(&[&sol.derived.k0f.transpose(), &(&sol.derived.mf - &p.terminal.qf * p.lambda)]);
        assert_eq!((s_end - want).amax(), 0.0);
        assert_eq!((sol.minor_offset.s_vec.terminal() + &sol.derived.nuf).amax(), 0.0);
        assert_eq!(sol.minor_offset.s_mat.shape(), (n, 2 * n));
    }

    #[test]
    fn piecewise_coefficients_keep_identities() {
        let mut p = builtin::canonical();
        let s = |x: f64| DMatrix::from_element(1, 1, x);
        p.coefficients.g = Schedule::from_segments(vec![(0.0, s(0.3)), (0.25, s(-0.2)), (0.5, s(0.6))]).unwrap();
        p.coefficients.q = Schedule::from_segments(vec![(0.0, s(1.0)), (0.75, s(2.0))]).unwrap();
        let g = p.grid(800).unwrap();
        let sol = solve_mean_field(&p, &g).unwrap();
        let (m, v) = sol.law.gain_identity_residual();
        assert!(m <= 1e-8 && v <= 1e-8, "{m} {v}");
        let r = sol.matching_residual().unwrap();
        assert!(r.max() <= 1e-8, "{r:?}");
    }

    #[test]
    fn uncoupled_offset_vanishes() {
        // G = F = F0 = 0, K0 = 0, M = λQ, ν = 0 and matching terminal data
        let p = builtin::decoupled();
        let g = p.grid(100).unwrap();
        let sol = solve_mean_field(&p, &g).unwrap();
        assert!(sol.minor_offset.s_mat.nodes().iter().all(|m| m.amax() == 0.0));
        assert!(sol.minor_offset.s_vec.nodes().iter().all(|m| m.amax() == 0.0));
    }

    #[test]
    fn two_dimensional_identities() {
        let mut p = builtin::canonical();
        p.dims = crate::scenario::Dims { n: 2, n1: 1, n2: 2 };
        let m = |v: &[f64]| DMatrix::from_row_slice(2, 2, v);
        let col = |v: &[f64]| DMatrix::from_column_slice(2, 1, v);
        let c = &mut p.coefficients;
        c.a0 = Schedule::constant(m(&[-0.3, 0.1, 0.0, -0.2]));
        c.f0 = Schedule::constant(m(&[0.2, 0.0, 0.1, 0.1]));
        c.a = Schedule::constant(m(&[-0.4, 0.2, -0.1, 0.0]));
        c.f = Schedule::constant(m(&[0.1, 0.0, 0.0, 0.1]));
        c.g = Schedule::constant(m(&[0.3, 0.0, 0.1, 0.2]));
        c.h0 = Schedule::constant(m(&[0.4, 0.0, 0.0, 0.3]));
        c.h1 = Schedule::constant(m(&[0.5, 0.1, 0.0, 0.5]));
        c.h2 = Schedule::constant(m(&[0.2, 0.0, 0.1, 0.2]));
        c.q0 = Schedule::constant(m(&[1.0, 0.2, 0.2, 1.0]));
        c.q = Schedule::constant(m(&[1.0, 0.0, 0.0, 2.0]));
        c.d0 = Schedule::constant(m(&[0.3, 0.0, 0.0, 0.3]));
        c.d = Schedule::constant(m(&[0.2, 0.0, 0.0, 0.2]));
        c.b0 = Schedule::constant(col(&[1.0, 0.5]));
        c.b = Schedule::constant(col(&[0.0, 1.0]));
        c.eta0 = Schedule::constant(col(&[0.1, 0.0]));
        c.eta = Schedule::constant(col(&[0.5, -0.5]));
        let t = &mut p.terminal;
        t.h0f = m(&[0.4, 0.0, 0.0, 0.3]);
        t.h1f = m(&[0.5, 0.1, 0.0, 0.5]);
        t.h2f = m(&[0.2, 0.0, 0.1, 0.2]);
        t.q0f = m(&[1.0, 0.0, 0.0, 1.0]);
        t.qf = m(&[1.0, 0.0, 0.0, 1.0]);
        t.eta0f = col(&[0.0, 0.1]);
        t.etaf = col(&[0.5, 0.0]);
        p.z0 = col(&[1.0, -1.0]);
        p.m0 = col(&[0.5, 0.5]);
        p.minor_init = crate::scenario::MinorInit::Constant(col(&[0.5, 0.5]));
        assert!(crate::scenario::validate(&p).is_empty());
        let g = p.grid(1000).unwrap();
        let sol = solve_mean_field(&p, &g).unwrap();
        let (mm, vv) = sol.law.gain_identity_residual();
        assert!(mm <= 1e-8 && vv <= 1e-8, "{mm} {vv}");
        assert!(sol.matching_residual().unwrap().max() <= 1e-8);
    }

    #[test]
    fn idle_controls_give_zero_gains() {
        let mut p = builtin::canonical();
        p.coefficients.b = Schedule::constant(DMatrix::zeros(1, 1));
        p.coefficients.b0 = Schedule::constant(DMatrix::zeros(1, 1));
        let g = p.grid(100).unwrap();
        let sol = solve_mean_field(&p, &g).unwrap();
        for k in 0..g.steps() {
            let gains = sol.law.gains_at(g.stage(k, StagePoint::Mid));
            for m in [&gains.gamma0_z, &gains.gamma0, &gains.gamma_i, &gains.gamma_z, &gains.gamma_i0, &gains.ubar_z, &gains.ubar] {
                assert_eq!(m.amax(), 0.0);
            }
        }
    }

    #[test]
    fn canonical_gains_are_bounded() {
        let p = builtin::canonical();
        let g = p.grid(500).unwrap();
        let sol = solve_mean_field(&p, &g).unwrap();
        let sup = |path: &crate::numerics::MatrixPath| path.nodes().iter().map(|m| m.norm()).fold(0.0, f64::max);
        let bound = sup(&sol.law.p_lambda).max(sup(&sol.law.s_mat)).max(sup(&sol.law.big_p)).max(sup(&sol.law.phi)).max(sup(&sol.law.s_vec));
        for k in 0..g.node_count() {
            let gains = sol.law.gains_at(g.node_stage(k));
            for m in [&gains.gamma0_z, &gains.gamma0, &gains.gamma_i, &gains.gamma_z, &gains.gamma_i0] {
                assert!(m.iter().all(|x| x.is_finite()));
                assert!(m.norm() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn solve_is_bitwise_repeatable() {
        let p = builtin::canonical();
        let g = p.grid(300).unwrap();
        let a = solve_mean_field(&p, &g).unwrap();
        let b = solve_mean_field(&p, &g).unwrap();
        assert_eq!(a.riccati, b.riccati);
        assert_eq!(a.offset, b.offset);
        assert_eq!(a.minor_offset, b.minor_offset);
    }
}
