use nalgebra::DMatrix;

use super::offset::AggregateOffset;
use super::riccati::{MinorRiccati, RiccatiPath};
use super::MeanfieldError;
use crate::numerics::{hermite_midpoint, hstack, integrate, Direction, MatrixPath, Stage, StagePoint, TimeGrid};
use crate::scenario::{AggregateSystem, DerivedCoefficients, ScenarioParams};

/// Minor offset in feedback form `ϕ = S Z + s`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinorOffset {
    /// `S`, n × 2n.
    pub s_mat: MatrixPath,
    /// `s`, n × 1.
    pub s_vec: MatrixPath,
}

/// Solved paths the minor offset depends on.
#[derive(Clone, Copy)]
struct Inputs<'a> {
    params: &'a ScenarioParams,
    derived: &'a DerivedCoefficients,
    agg: &'a AggregateSystem,
    big_p: &'a MatrixPath,
    phi: &'a MatrixPath,
    p_lambda: &'a MatrixPath,
    grid: &'a TimeGrid,
}

/// Coefficients of the matrix ODEs for `S` and `s` at one stage.
struct Drift {
    /// `P_λ 𝒮 - Aᵀ`
    l: DMatrix<f64>,
    /// closed-loop drift of `Z`
    a_z: DMatrix<f64>,
    /// closed-loop offset of `Z`
    b_z: DMatrix<f64>,
    /// `P_λ C1 + C2`
    src_mat: DMatrix<f64>,
    /// `c2`
    src_vec: DMatrix<f64>,
}

fn drift(inp: Inputs, st: Stage) -> Drift {
    let g = inp.grid;
    let c = &inp.params.coefficients;
    let n = inp.params.dims.n;
    let lambda = inp.params.lambda;
    let pl = inp.p_lambda.at_stage(st);
    let bp = inp.big_p.at_stage(st);
    let phi = inp.phi.at_stage(st);
    let sbb = inp.agg.sbb.at_stage(g, st);
    let l = pl * inp.agg.s_minor.at_stage(g, st) - c.a.at_stage(g, st).transpose();
    let a_z = inp.agg.abb.at_stage(g, st) - sbb * bp;
    let b_z = sbb * phi;
    let c1 = hstack(&[c.g.at_stage(g, st), c.f.at_stage(g, st)]);
    let f_t = hstack(&[&c.f0.at_stage(g, st).transpose(), &c.f.at_stage(g, st).transpose()]);
    let cost = hstack(&[
        &inp.derived.k0.at_stage(g, st).transpose(),
        &(inp.derived.m.at_stage(g, st) - c.q.at_stage(g, st) * lambda),
    ]);
    debug_assert_eq!(cost.shape(), (n, 2 * n));
    Drift {
        l,
        a_z,
        b_z,
        src_mat: pl * c1 + cost + &f_t * bp,
        src_vec: inp.derived.nu.at_stage(g, st) - f_t * phi,
    }
}

fn field(inp: Inputs, st: Stage, y: &(DMatrix<f64>, DMatrix<f64>)) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = drift(inp, st);
    let (s_mat, s_vec) = y;
    (
        &d.l * s_mat - s_mat * &d.a_z + &d.src_mat,
        &d.l * s_vec - s_mat * &d.b_z + &d.src_vec,
    )
}

/// Solves the backward matrix ODEs for `(S, s)` obtained by matching the
/// drift of `S Z + s` against the minor adjoint dynamics.
pub fn derive_minor_offset(
    params: &ScenarioParams,
    derived: &DerivedCoefficients,
    agg: &AggregateSystem,
    big_p: &RiccatiPath,
    offset: &AggregateOffset,
    minor: &MinorRiccati,
    grid: &TimeGrid,
) -> Result<MinorOffset, MeanfieldError> {
    for (name, path) in [
        ("aggregate Riccati path", &big_p.p),
        ("aggregate offset", &offset.phi),
        ("minor Riccati path", &minor.p_lambda.p),
    ] {
        if path.grid() != grid {
            return Err(MeanfieldError::GridMismatch(name.into()));
        }
    }
    let inp = Inputs {
        params,
        derived,
        agg,
        big_p: &big_p.p,
        phi: &offset.phi,
        p_lambda: &minor.p_lambda.p,
        grid,
    };
    let lambda = params.lambda;
    let s_end = -hstack(&[&derived.k0f.transpose(), &(&derived.mf - &params.terminal.qf * lambda)]);
    let init = (s_end, -derived.nuf.clone());
    let nodes = integrate(grid, Direction::Backward, init, |st, y| field(inp, st, y), |_| {})?;

    let h = grid.dt();
    let mut mids_mat = Vec::with_capacity(grid.steps());
    let mut mids_vec = Vec::with_capacity(grid.steps());
    for k in 0..grid.steps() {
        let da = field(inp, grid.stage(k, StagePoint::Start), &nodes[k]);
        let db = field(inp, grid.stage(k, StagePoint::End), &nodes[k + 1]);
        mids_mat.push(hermite_midpoint(&nodes[k].0, &nodes[k + 1].0, &da.0, &db.0, h));
        mids_vec.push(hermite_midpoint(&nodes[k].1, &nodes[k + 1].1, &da.1, &db.1, h));
    }
    let (mats, vecs): (Vec<_>, Vec<_>) = nodes.into_iter().unzip();
    Ok(MinorOffset {
        s_mat: MatrixPath::new(*grid, mats)?.with_mids(mids_mat)?,
        s_vec: MatrixPath::new(*grid, vecs)?.with_mids(mids_vec)?,
    })
}

/// Sup-norm of the drift-matching defect, split into the part multiplying
/// `Z` and the constant part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchingResidual {
    pub matrix: f64,
    pub vector: f64,
}

impl MatchingResidual {
    pub fn max(&self) -> f64 {
        self.matrix.max(self.vector)
    }
}

/// Fourth-order derivative estimate at node `j` using nodes of `[a, b]` only.
fn node_derivative(nodes: &[DMatrix<f64>], j: usize, a: usize, b: usize, h: f64) -> Option<DMatrix<f64>> {
    let f = |i: usize| &nodes[i];
    if j >= a + 2 && j + 2 <= b {
        Some((f(j - 2) - f(j + 2) + (f(j + 1) - f(j - 1)) * 8.0) / (12.0 * h))
    } else if j + 4 <= b {
        Some((f(j) * -25.0 + f(j + 1) * 48.0 - f(j + 2) * 36.0 + f(j + 3) * 16.0 - f(j + 4) * 3.0) / (12.0 * h))
    } else if j >= a + 4 {
        Some((f(j) * 25.0 - f(j - 1) * 48.0 + f(j - 2) * 36.0 - f(j - 3) * 16.0 + f(j - 4) * 3.0) / (12.0 * h))
    } else {
        None
    }
}

/// Checks at every node that `ϕ = S Z + s` has the drift the minor adjoint
/// equation requires, for all `Z`. Derivatives of the stored paths come from
/// fourth-order finite differences taken inside each constant coefficient
/// piece; nodes on piece boundaries are checked from both sides.
pub fn matching_residual(
    params: &ScenarioParams,
    derived: &DerivedCoefficients,
    agg: &AggregateSystem,
    big_p: &RiccatiPath,
    offset: &AggregateOffset,
    minor: &MinorRiccati,
    sol: &MinorOffset,
) -> Result<MatchingResidual, MeanfieldError> {
    let grid = *sol.s_mat.grid();
    let n = params.dims.n;
    let c = &params.coefficients;
    let h = grid.dt();
    let mut out = MatchingResidual { matrix: 0.0, vector: 0.0 };
    for (a, b) in agg.abb.node_ranges(&grid)? {
        for j in a..=b {
            let (ds, dsv) = match (
                node_derivative(sol.s_mat.nodes(), j, a, b, h),
                node_derivative(sol.s_vec.nodes(), j, a, b, h),
            ) {
                (Some(x), Some(y)) => (x, y),
                _ => continue,
            };
            let st = if j < b { grid.stage(j, StagePoint::Start) } else { grid.stage(j - 1, StagePoint::End) };
            let pl = minor.p_lambda.p.node(j);
            let bp = big_p.p.node(j);
            let phi = offset.phi.node(j);
            let s_mat = sol.s_mat.node(j);
            let s_vec = sol.s_vec.node(j);

            // adjoint of the aggregate problem as an affine map of Z
            let p0 = (-(bp.rows(0, n)), phi.rows(0, n).into_owned());
            let p = (-(bp.rows(n, n)), phi.rows(n, n).into_owned());
            let f0t = c.f0.at_stage(&grid, st).transpose();
            let ft = c.f.at_stage(&grid, st).transpose();
            let chi1 = hstack(&[c.g.at_stage(&grid, st), c.f.at_stage(&grid, st)]);
            let chi2_mat = hstack(&[
                &derived.k0.at_stage(&grid, st).transpose(),
                &(derived.m.at_stage(&grid, st) - c.q.at_stage(&grid, st) * params.lambda),
            ]) - &f0t * &p0.0
                - &ft * &p.0;
            let chi2_vec = derived.nu.at_stage(&grid, st) - &f0t * &p0.1 - &ft * &p.1;
            let bsr = c.b.at_stage(&grid, st) * agg.r_lambda_inv.at_stage(&grid, st) * c.b.at_stage(&grid, st).transpose();
            let lead = pl * bsr - c.a.at_stage(&grid, st).transpose();
            let req_mat = &lead * s_mat + pl * chi1 + chi2_mat;
            let req_vec = &lead * s_vec + chi2_vec;

            // Itô drift of S Z + s along the closed-loop Z
            let bbb1 = agg.bbb1.at_stage(&grid, st);
            let feedback = bbb1 * agg.rbb1.at_stage(&grid, st).clone().try_inverse().expect("invertible") * bbb1.transpose();
            let a_z = agg.abb.at_stage(&grid, st) - &feedback * bp;
            let b_z = &feedback * phi;
            let ito_mat = ds + s_mat * a_z;
            let ito_vec = dsv + s_mat * b_z;

            out.matrix = out.matrix.max((ito_mat - req_mat).amax());
            out.vector = out.vector.max((ito_vec - req_vec).amax());
        }
    }
    Ok(out)
}
