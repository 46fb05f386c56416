use nalgebra::DMatrix;

use super::law::DecentralizedLaw;
use super::riccati::riccati_field;
use super::MeanfieldError;
use crate::numerics::{
    hermite_midpoint, integrate, integrate_observed, symmetrize, vstack, Direction, MatrixPath,
    Stage, StagePoint,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyReport {
    /// `sup_t sqrt(E |p_resolved - p_law|²)`
    pub residual: f64,
    /// Constant shift added to the injected mean-field control.
    pub perturbation: f64,
}

type Triple = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// Re-solves the major player's problem with the law's mean-field control
/// (shifted by `perturbation` in every component) held fixed, and measures
/// how far the resulting adjoint `p` is from the one the law was built on.
///
/// The re-solve uses `Y = -P̃ X + Π Z + π̃`, where `X` is the re-solved
/// state and `Z` the law's limit state. At the fixed point `Π = P̃ - 𝐏` and
/// `π̃ = φ`, so the residual vanishes up to integration error.
pub fn consistency_residual(
    law: &DecentralizedLaw,
    perturbation: f64,
) -> Result<ConsistencyReport, MeanfieldError> {
    let grid = *law.grid();
    let agg = law.aggregate();
    let n = law.n();
    let n1 = law.params().dims.n1;
    let shift = DMatrix::from_element(n1, 1, perturbation);

    let field = |st: Stage, y: &Triple| -> Triple {
        let (pt, pi, pv) = y;
        let g = law.gains_at(st);
        let a = agg.abb.at_stage(&grid, st);
        let s0 = agg.sbb0.at_stage(&grid, st);
        let bb = agg.bbb.at_stage(&grid, st);
        let pts0 = pt * s0;
        let ptb = pt * bb;
        let gamma = &g.ubar + &shift;
        (
            riccati_field(pt, a, s0, agg.qbb0.at_stage(&grid, st)),
            -(a.transpose() * pi) - pi * &g.a_z + &pts0 * pi + &ptb * &g.ubar_z,
            -(a.transpose() * pv) + &pts0 * pv + ptb * gamma - pi * &g.b_z + agg.vbb0.at_stage(&grid, st),
        )
    };
    let init = (
        agg.qbb0f.clone(),
        DMatrix::zeros(2 * n, 2 * n),
        -agg.vbb0f.clone(),
    );
    let nodes = integrate(&grid, Direction::Backward, init, field, |y| y.0 = symmetrize(&y.0))?;
    let h = grid.dt();
    let mut mids: [Vec<DMatrix<f64>>; 3] = Default::default();
    for k in 0..grid.steps() {
        let da = field(grid.stage(k, StagePoint::Start), &nodes[k]);
        let db = field(grid.stage(k, StagePoint::End), &nodes[k + 1]);
        mids[0].push(hermite_midpoint(&nodes[k].0, &nodes[k + 1].0, &da.0, &db.0, h));
        mids[1].push(hermite_midpoint(&nodes[k].1, &nodes[k + 1].1, &da.1, &db.1, h));
        mids[2].push(hermite_midpoint(&nodes[k].2, &nodes[k + 1].2, &da.2, &db.2, h));
    }
    let mut split: [Vec<DMatrix<f64>>; 3] = Default::default();
    for (a, b, c) in nodes {
        split[0].push(a);
        split[1].push(b);
        split[2].push(c);
    }
    let [m0, m1, m2] = mids;
    let [s0, s1, s2] = split;
    let pt = MatrixPath::new(grid, s0)?.with_mids(m0)?;
    let pi = MatrixPath::new(grid, s1)?.with_mids(m1)?;
    let pv = MatrixPath::new(grid, s2)?.with_mids(m2)?;

    // joint moments of (Z, E), E = X - Z; E carries no noise
    let d4 = 4 * n;
    let moment_field = |st: Stage, y: &(DMatrix<f64>, DMatrix<f64>)| {
        let (mu, sigma) = y;
        let g = law.gains_at(st);
        let a = agg.abb.at_stage(&grid, st);
        let s0 = agg.sbb0.at_stage(&grid, st);
        let bb = agg.bbb.at_stage(&grid, st);
        let ptv = pt.at_stage(st);
        let a_e = a - s0 * ptv;
        let c_e = &a_e + s0 * pi.at_stage(st) + bb * &g.ubar_z - &g.a_z;
        let mut drift = DMatrix::zeros(d4, d4);
        drift.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&g.a_z);
        drift.view_mut((2 * n, 0), (2 * n, 2 * n)).copy_from(&c_e);
        drift.view_mut((2 * n, 2 * n), (2 * n, 2 * n)).copy_from(&a_e);
        let off_e = s0 * pv.at_stage(st) + bb * (&g.ubar + &shift) - &g.b_z;
        let offset = vstack(&[&g.b_z, &off_e]);
        let noise = vstack(&[&g.dbb0, &DMatrix::zeros(2 * n, g.dbb0.ncols())]);
        let a_sigma = &drift * sigma;
        (
            &drift * mu + offset,
            &a_sigma + a_sigma.transpose() + &noise * noise.transpose(),
        )
    };
    let z0 = law.z_init();
    let mu0 = vstack(&[&z0, &DMatrix::zeros(2 * n, 1)]);
    let mut worst = 0.0f64;
    let lower = |m: &DMatrix<f64>| m.rows(n, n).into_owned();
    integrate_observed(
        &grid,
        Direction::Forward,
        (mu0, DMatrix::zeros(d4, d4)),
        moment_field,
        |y| y.1 = symmetrize(&y.1),
        |k, (mu, sigma)| {
            let ptk = pt.node(k);
            let lz = lower(&(-ptk + pi.node(k) + law.big_p.node(k)));
            let le = lower(&(-ptk));
            let l = crate::numerics::hstack(&[&lz, &le]);
            let c = lower(&(pv.node(k) - law.phi.node(k)));
            let mean = &l * mu + c;
            let second = mean.norm_squared() + (&l * sigma * l.transpose()).trace();
            worst = worst.max(second.max(0.0).sqrt());
        },
    )?;
    Ok(ConsistencyReport {
        residual: worst,
        perturbation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::solve_mean_field;
    use crate::numerics::Schedule;
    use crate::scenario::builtin;

    #[test]
    fn canonical_fixed_point_and_perturbation() {
        let p = builtin::canonical();
        let g = p.grid(2000).unwrap();
        let sol = solve_mean_field(&p, &g).unwrap();
        let r = consistency_residual(&sol.law, 0.0).unwrap();
        assert!(r.residual <= 1e-8, "{}", r.residual);
        let bumped = consistency_residual(&sol.law, 0.1).unwrap();
        assert!(bumped.residual >= 1e-3, "{}", bumped.residual);
    }

    #[test]
    fn idle_minor_control_is_consistent() {
        let mut p = builtin::canonical();
        p.coefficients.b = Schedule::constant(DMatrix::zeros(1, 1));
        let g = p.grid(200).unwrap();
        let sol = solve_mean_field(&p, &g).unwrap();
        let r = consistency_residual(&sol.law, 0.0).unwrap();
        assert!(r.residual <= 1e-10, "{}", r.residual);
    }
}
