use nalgebra::DMatrix;

use super::riccati::RiccatiPath;
use super::MeanfieldError;
use crate::numerics::{integrate_matrix_ode, Direction, MatrixPath, Stage, TimeGrid};
use crate::scenario::AggregateSystem;

/// Offset `φ` of the aggregate adjoint `(p0, p) = -𝐏 Z + φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateOffset {
    pub phi: MatrixPath,
}

/// `dφ/dt = -𝔸0ᵀ φ + 𝐏 𝕊 φ + 𝐯0`.
pub fn aggregate_offset_field(
    agg: &AggregateSystem,
    big_p: &MatrixPath,
    grid: &TimeGrid,
    st: Stage,
    phi: &DMatrix<f64>,
) -> DMatrix<f64> {
    let a = agg.abb.at_stage(grid, st);
    let s = agg.sbb.at_stage(grid, st);
    let p = big_p.at_stage(st);
    -(a.transpose() * phi) + p * (s * phi) + agg.vbb0.at_stage(grid, st)
}

pub fn solve_aggregate_offset(
    agg: &AggregateSystem,
    big_p: &RiccatiPath,
    grid: &TimeGrid,
) -> Result<AggregateOffset, MeanfieldError> {
    if big_p.p.grid() != grid {
        return Err(MeanfieldError::GridMismatch("aggregate Riccati path".into()));
    }
    let phi = integrate_matrix_ode(
        |st, phi| aggregate_offset_field(agg, &big_p.p, grid, st, phi),
        -agg.vbb0f.clone(),
        grid,
        Direction::Backward,
    )?;
    Ok(AggregateOffset { phi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::riccati::{solve_aggregate_riccati, RiccatiSource};
    use crate::numerics::Schedule;
    use crate::scenario::{assemble_aggregate, builtin, derive_coefficients};

    #[test]
    fn zero_sources_give_zero_offset() {
        let p = builtin::decoupled();
        let agg = assemble_aggregate(&p, &derive_coefficients(&p)).unwrap();
        let g = p.grid(100).unwrap();
        let r = solve_aggregate_riccati(&agg, &g).unwrap();
        let o = solve_aggregate_offset(&agg, &r, &g).unwrap();
        assert!(o.phi.nodes().iter().all(|v| v.amax() == 0.0));
    }

    #[test]
    fn constant_source_integrates_linearly() {
        let p = builtin::canonical();
        let mut agg = assemble_aggregate(&p, &derive_coefficients(&p)).unwrap();
        let c = DMatrix::from_column_slice(2, 1, &[0.7, -1.3]);
        agg.abb = Schedule::constant(DMatrix::zeros(2, 2));
        agg.vbb0 = Schedule::constant(c.clone());
        agg.vbb0f = DMatrix::zeros(2, 1);
        let g = p.grid(64).unwrap();
        let zero = RiccatiPath {
            p: MatrixPath::constant(g, DMatrix::zeros(2, 2)),
            source: RiccatiSource::Aggregate,
        };
        let o = solve_aggregate_offset(&agg, &zero, &g).unwrap();
        for k in 0..g.node_count() {
            let want = &c * (g.node(k) - 1.0);
            assert!((o.phi.node(k) - want).amax() < 1e-14);
        }
    }

    #[test]
    fn canonical_terminal_is_exact() {
        let p = builtin::canonical();
        let agg = assemble_aggregate(&p, &derive_coefficients(&p)).unwrap();
        let g = p.grid(200).unwrap();
        let r = solve_aggregate_riccati(&agg, &g).unwrap();
        let o = solve_aggregate_offset(&agg, &r, &g).unwrap();
        assert_eq!((o.phi.terminal() + &agg.vbb0f).amax(), 0.0);
    }
}
