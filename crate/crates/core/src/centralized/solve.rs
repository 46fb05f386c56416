use nalgebra::DMatrix;

use super::joint::{JointLQ, JointPiece};
use super::CentralizedError;
use crate::meanfield::{RiccatiPath, RiccatiSource, ASYMMETRY_TOL};
use crate::numerics::{
    hermite_midpoint, integrate, integrate_observed, passes_shifted_cholesky, symmetrize, Direction,
    MatrixPath, Stage, StagePoint, TimeGrid, PSD_REL_TOL,
};

/// Value function `V(t, x) = xᵀ Π x + 2 gᵀ x + c` of the stacked problem
/// and its optimal feedback `ǔ = -R̂⁻¹ B̂ᵀ (Π x + g)`.
#[derive(Clone, Debug)]
pub struct CentralizedSolution {
    pub pi: RiccatiPath,
    pub g: MatrixPath,
    /// Constant term at every node.
    pub c: Vec<f64>,
    pub optimal_cost: f64,
}

type JointState = (DMatrix<f64>, DMatrix<f64>, f64);

/// Backward field of `(Π, g, c)`. `Âᵀ Π` uses the block structure of `Â`,
/// so the only dense product per call is `(Π S) Π`.
fn joint_field(piece: &JointPiece, y: &JointState) -> JointState {
    let (pi, g, _) = y;
    // Π is symmetric: Π Â = (Âᵀ Π)ᵀ, computed on contiguous columns
    let pi_a = piece.ahat.mul_right(pi);
    let pi_s = piece.srr.mul_right(pi);
    let mut dpi = pi_a.transpose() + &pi_a + &piece.cost.q;
    dpi.gemm(-1.0, &pi_s, pi, 1.0);
    let wg = piece.srr.apply(g);
    let mut dg = piece.ahat.apply_transpose(g) + &piece.cost.s;
    dg.gemm(-1.0, pi, &wg, 1.0);
    let dc = pi.dot(&piece.noise_gram) - g.dot(&wg) + piece.cost.c;
    (-dpi, -dg, -dc)
}

fn terminal_state(joint: &JointLQ) -> JointState {
    (symmetrize(&joint.terminal.q), joint.terminal.s.clone(), joint.terminal.c)
}

fn value_at(x: &DMatrix<f64>, y: &JointState) -> f64 {
    (x.transpose() * &y.0 * x)[0] + 2.0 * y.1.dot(x) + y.2
}

fn shifted_cholesky_ok(pi: &DMatrix<f64>) -> bool {
    passes_shifted_cholesky(pi, PSD_REL_TOL)
}

fn post_step(y: &mut JointState) {
    y.0 = symmetrize(&y.0);
}

/// Optimal social cost without storing the Riccati path, for large populations.
pub fn optimal_cost(joint: &JointLQ, grid: &TimeGrid) -> Result<f64, CentralizedError> {
    joint.check_grid(grid)?;
    let mut bad_node = None;
    let field = |st: Stage, y: &JointState| joint_field(joint.piece(grid, st), y);
    let y0 = integrate_observed(grid, Direction::Backward, terminal_state(joint), field, post_step, |k, y| {
        if bad_node.is_none() && !shifted_cholesky_ok(&y.0) {
            bad_node = Some(k);
        }
    })?;
    if let Some(node) = bad_node {
        return Err(CentralizedError::NotPsd { node });
    }
    Ok(value_at(&joint.x_init, &y0))
}

/// Full backward solve, keeping `Π` and `g` at nodes and interval midpoints.
pub fn solve_centralized(joint: &JointLQ, grid: &TimeGrid) -> Result<CentralizedSolution, CentralizedError> {
    joint.check_grid(grid)?;
    let field = |st: Stage, y: &JointState| joint_field(joint.piece(grid, st), y);
    let nodes = integrate(grid, Direction::Backward, terminal_state(joint), field, post_step)?;
    if let Some(node) = nodes.iter().position(|y| !shifted_cholesky_ok(&y.0)) {
        return Err(CentralizedError::NotPsd { node });
    }
    let h = grid.dt();
    let mut pi_mids = Vec::with_capacity(grid.steps());
    let mut g_mids = Vec::with_capacity(grid.steps());
    for k in 0..grid.steps() {
        let (a, b) = (&nodes[k], &nodes[k + 1]);
        let da = field(grid.stage(k, StagePoint::Start), a);
        let db = field(grid.stage(k, StagePoint::End), b);
        pi_mids.push(symmetrize(&hermite_midpoint(&a.0, &b.0, &da.0, &db.0, h)));
        g_mids.push(hermite_midpoint(&a.1, &b.1, &da.1, &db.1, h));
    }
    let optimal_cost = value_at(&joint.x_init, &nodes[0]);
    let c = nodes.iter().map(|y| y.2).collect();
    let (pis, gs): (Vec<_>, Vec<_>) = nodes.into_iter().map(|(p, g, _)| (p, g)).unzip();
    let pi = MatrixPath::new(*grid, pis)?.with_mids(pi_mids)?;
    let asym = pi.max_asymmetry();
    if asym > ASYMMETRY_TOL {
        return Err(CentralizedError::Asymmetry { asymmetry: asym });
    }
    let g = MatrixPath::new(*grid, gs)?.with_mids(g_mids)?;
    Ok(CentralizedSolution {
        pi: RiccatiPath {
            p: pi,
            source: RiccatiSource::Centralized,
        },
        g,
        c,
        optimal_cost,
    })
}

impl CentralizedSolution {
    /// `ǔ = -R̂⁻¹ B̂ᵀ (Π x + g)` at one stage.
    pub fn feedback(&self, joint: &JointLQ, grid: &TimeGrid, st: Stage, x: &DMatrix<f64>) -> DMatrix<f64> {
        let k = joint.piece(grid, st).gain_map(joint.n_minor, joint.lambda);
        -(k * (self.pi.p.at_stage(st) * x + self.g.at_stage(st)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centralized::assemble_joint;
    use crate::meanfield::solve_riccati;
    use crate::numerics::Schedule;
    use crate::scenario::{builtin, MinorInit, ScenarioParams};

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn zero_coupling(mut p: ScenarioParams) -> ScenarioParams {
        let c = &mut p.coefficients;
        for s in [&mut c.f0, &mut c.f, &mut c.g, &mut c.h0, &mut c.h1, &mut c.h2] {
            *s = Schedule::constant(scalar(0.0));
        }
        p.terminal.h0f = scalar(0.0);
        p.terminal.h1f = scalar(0.0);
        p.terminal.h2f = scalar(0.0);
        p
    }

    #[test]
    fn zero_weights_give_zero_cost_and_feedback() {
        let mut p = builtin::canonical();
        let c = &mut p.coefficients;
        for s in [&mut c.q0, &mut c.q, &mut c.eta0, &mut c.eta] {
            *s = Schedule::constant(scalar(0.0));
        }
        p.terminal.q0f = scalar(0.0);
        p.terminal.qf = scalar(0.0);
        let j = assemble_joint(&p, 3).unwrap();
        let g = p.grid(200).unwrap();
        let sol = solve_centralized(&j, &g).unwrap();
        assert_eq!(sol.optimal_cost, 0.0);
        let st = g.stage(0, StagePoint::Start);
        assert_eq!(sol.feedback(&j, &g, st, &j.x_init).amax(), 0.0);
    }

    #[test]
    fn streaming_cost_matches_full_solve() {
        let p = builtin::canonical();
        let j = assemble_joint(&p, 3).unwrap();
        let g = p.grid(300).unwrap();
        let full = solve_centralized(&j, &g).unwrap();
        assert_eq!(optimal_cost(&j, &g).unwrap(), full.optimal_cost);
        assert!(full.pi.is_psd());
    }

    /// Zero coupling splits into the major LQ plus λ times one minor LQ.
    #[test]
    fn zero_coupling_decomposes() {
        let mut p = zero_coupling(builtin::canonical());
        p.minor_init = MinorInit::Constant(p.m0.clone());
        p.lambda = 1.3;
        let n_minor = 4;
        let g = p.grid(1000).unwrap();
        let joint = optimal_cost(&assemble_joint(&p, n_minor).unwrap(), &g).unwrap();

        let c = p.coefficients.at(0.0);
        let scalar_lq = |a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>,
                         d: &DMatrix<f64>, eta: &DMatrix<f64>, qf: &DMatrix<f64>, etaf: &DMatrix<f64>,
                         x0: &DMatrix<f64>| {
            let mut single = p.clone();
            single.lambda = 1.0;
            let cc = &mut single.coefficients;
            cc.a0 = Schedule::constant(a.clone());
            cc.b0 = Schedule::constant(b.clone());
            cc.q0 = Schedule::constant(q.clone());
            cc.r0 = Schedule::constant(r.clone());
            cc.d0 = Schedule::constant(d.clone());
            cc.eta0 = Schedule::constant(eta.clone());
            cc.h0 = Schedule::constant(scalar(0.0));
            single.terminal.q0f = qf.clone();
            single.terminal.eta0f = etaf.clone();
            // silence the minor part: no weight, no noise, no drift
            for s in [&mut cc.q, &mut cc.a, &mut cc.d, &mut cc.eta] {
                *s = Schedule::constant(scalar(0.0));
            }
            single.terminal.qf = scalar(0.0);
            single.terminal.etaf = scalar(0.0);
            single.z0 = x0.clone();
            single.minor_init = MinorInit::Constant(scalar(0.0));
            optimal_cost(&assemble_joint(&single, 1).unwrap(), &g).unwrap()
        };
        let t = &p.terminal;
        let major = scalar_lq(&c.a0, &c.b0, &c.q0, &c.r0, &c.d0, &c.eta0, &t.q0f, &t.eta0f, &p.z0);
        let minor = scalar_lq(&c.a, &c.b, &c.q, &c.r, &c.d, &c.eta, &t.qf, &t.etaf, &p.m0);
        let want = major + p.lambda * minor;
        assert!((joint - want).abs() <= 1e-8 * (1.0 + want.abs()), "{joint} vs {want}");
    }

    #[test]
    fn fourth_order_in_dt() {
        let p = builtin::canonical();
        let j = assemble_joint(&p, 2).unwrap();
        let cost = |steps| optimal_cost(&j, &p.grid(steps).unwrap()).unwrap();
        let (c1, c2, c4) = (cost(20), cost(40), cost(80));
        let ratio = (c1 - c2) / (c2 - c4);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
        assert!((cost(2000) - cost(1000)).abs() < 1e-12);
    }

    #[test]
    fn exchangeable_minors_can_be_permuted() {
        let mut p = builtin::canonical();
        let xs: Vec<_> = [0.1, 0.9, -0.4].iter().map(|&x| scalar(x)).collect();
        let g = p.grid(400).unwrap();
        p.minor_init = MinorInit::Explicit(xs.clone());
        let a = optimal_cost(&assemble_joint(&p, 3).unwrap(), &g).unwrap();
        p.minor_init = MinorInit::Explicit(vec![xs[2].clone(), xs[0].clone(), xs[1].clone()]);
        let b = optimal_cost(&assemble_joint(&p, 3).unwrap(), &g).unwrap();
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} {b}");
    }

    #[test]
    fn cost_scales_with_weights() {
        let p = builtin::canonical();
        let kappa = 2.5;
        let mut q = p.clone();
        let c = &mut q.coefficients;
        for s in [&mut c.q0, &mut c.q, &mut c.r0, &mut c.r] {
            *s = s.map(|m| m * kappa);
        }
        q.terminal.q0f *= kappa;
        q.terminal.qf *= kappa;
        let g = p.grid(400).unwrap();
        let jp = assemble_joint(&p, 2).unwrap();
        let jq = assemble_joint(&q, 2).unwrap();
        let a = solve_centralized(&jp, &g).unwrap();
        let b = solve_centralized(&jq, &g).unwrap();
        assert!((b.optimal_cost - kappa * a.optimal_cost).abs() <= 1e-10 * b.optimal_cost);
        let st = g.stage(5, StagePoint::Mid);
        let ua = a.feedback(&jp, &g, st, &jp.x_init);
        let ub = b.feedback(&jq, &g, st, &jq.x_init);
        assert!((ua - ub).amax() < 1e-10);
    }

    #[test]
    fn single_player_matches_scalar_riccati() {
        let p = zero_coupling(builtin::canonical());
        let j = assemble_joint(&p, 1).unwrap();
        let g = p.grid(500).unwrap();
        let sol = solve_centralized(&j, &g).unwrap();
        let c = p.coefficients.at(0.0);
        let s0 = &c.b0 * c.r0.clone().try_inverse().unwrap() * c.b0.transpose();
        let major = solve_riccati(
            &g,
            &Schedule::constant(c.a0.clone()),
            &Schedule::constant(s0),
            &Schedule::constant(c.q0.clone()),
            &p.terminal.q0f,
            RiccatiSource::Aggregate,
        )
        .unwrap();
        for k in [0, 250, 500] {
            assert!((sol.pi.p.node(k)[(0, 0)] - major.p.node(k)[0]).abs() < 1e-13);
        }
    }
}
