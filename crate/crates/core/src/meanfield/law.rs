use nalgebra::DMatrix;

use super::minor::MinorOffset;
use super::offset::AggregateOffset;
use super::riccati::{MinorRiccati, RiccatiPath};
use super::MeanfieldError;
use crate::numerics::{hstack, MatrixPath, Stage, TimeGrid};
use crate::scenario::{AggregateSystem, ScenarioParams};

/// Feedback gains and limit-system coefficients on one RK4 stage.
///
/// `u0 = Γ0 Z + γ0`, `ui = Γi X̂i + ΓZ Z + γi`, `ū = Γū Z + γū`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageGains {
    pub gamma0_z: DMatrix<f64>,
    pub gamma0: DMatrix<f64>,
    pub gamma_i: DMatrix<f64>,
    pub gamma_z: DMatrix<f64>,
    pub gamma_i0: DMatrix<f64>,
    pub ubar_z: DMatrix<f64>,
    pub ubar: DMatrix<f64>,
    /// `dZ = (a_z Z + b_z) dt + dbb0 dW0`
    pub a_z: DMatrix<f64>,
    pub b_z: DMatrix<f64>,
    pub dbb0: DMatrix<f64>,
    /// `dX̂i = (a_minor X̂i + c_minor Z + b_minor) dt + d dWi`
    pub a_minor: DMatrix<f64>,
    pub c_minor: DMatrix<f64>,
    pub b_minor: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Decentralized strategies of the major and minor players, computed from
/// the solved limit problem.
#[derive(Clone, Debug)]
pub struct DecentralizedLaw {
    grid: TimeGrid,
    params: ScenarioParams,
    agg: AggregateSystem,
    /// `𝐏`
    pub big_p: MatrixPath,
    /// `φ`
    pub phi: MatrixPath,
    /// `P_λ`
    pub p_lambda: MatrixPath,
    /// `S`
    pub s_mat: MatrixPath,
    /// `s`
    pub s_vec: MatrixPath,
}

pub fn build_decentralized_law(
    big_p: &RiccatiPath,
    offset: &AggregateOffset,
    minor: &MinorRiccati,
    minor_offset: &MinorOffset,
    params: &ScenarioParams,
    agg: &AggregateSystem,
) -> Result<DecentralizedLaw, MeanfieldError> {
    let grid = *big_p.p.grid();
    for (name, path) in [
        ("aggregate offset", &offset.phi),
        ("minor Riccati path", &minor.p_lambda.p),
        ("minor offset S", &minor_offset.s_mat),
        ("minor offset s", &minor_offset.s_vec),
    ] {
        if path.grid() != &grid {
            return Err(MeanfieldError::GridMismatch(name.into()));
        }
    }
    Ok(DecentralizedLaw {
        grid,
        params: params.clone(),
        agg: agg.clone(),
        big_p: big_p.p.clone(),
        phi: offset.phi.clone(),
        p_lambda: minor.p_lambda.p.clone(),
        s_mat: minor_offset.s_mat.clone(),
        s_vec: minor_offset.s_vec.clone(),
    })
}

impl DecentralizedLaw {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn aggregate(&self) -> &AggregateSystem {
        &self.agg
    }

    pub fn n(&self) -> usize {
        self.params.dims.n
    }

    /// Initial limit state `Z(0) = (z0, m0)`.
    pub fn z_init(&self) -> DMatrix<f64> {
        crate::numerics::vstack(&[&self.params.z0, &self.params.m0])
    }

    pub fn gains_at(&self, st: Stage) -> StageGains {
        let g = &self.grid;
        let n = self.n();
        let c = &self.params.coefficients;
        let agg = &self.agg;
        let bp = self.big_p.at_stage(st);
        let phi = self.phi.at_stage(st);
        let pl = self.p_lambda.at_stage(st);
        let s_mat = self.s_mat.at_stage(st);
        let s_vec = self.s_vec.at_stage(st);
        let b0 = c.b0.at_stage(g, st);
        let b = c.b.at_stage(g, st);
        let k0 = agg.r0_inv.at_stage(g, st) * b0.transpose();
        let k = agg.r_lambda_inv.at_stage(g, st) * b.transpose();
        let sbb = agg.sbb.at_stage(g, st);
        let sm = agg.s_minor.at_stage(g, st);
        StageGains {
            gamma0_z: -(&k0 * bp.rows(0, n)),
            gamma0: &k0 * phi.rows(0, n),
            gamma_i: -(&k * pl),
            gamma_z: &k * s_mat,
            gamma_i0: &k * s_vec,
            ubar_z: -(&k * bp.rows(n, n)),
            ubar: &k * phi.rows(n, n),
            a_z: agg.abb.at_stage(g, st) - sbb * bp,
            b_z: sbb * phi,
            dbb0: agg.dbb0.at_stage(g, st).clone(),
            a_minor: c.a.at_stage(g, st) - sm * pl,
            c_minor: hstack(&[c.g.at_stage(g, st), c.f.at_stage(g, st)]) + sm * s_mat,
            b_minor: sm * s_vec,
            d: c.d.at_stage(g, st).clone(),
        }
    }

    /// Sup over nodes of `[0, -P_λ] + S - (rows n..2n of -𝐏)` and of
    /// `s - (rows n..2n of φ)`.
    pub fn gain_identity_residual(&self) -> (f64, f64) {
        let n = self.n();
        let mut worst = (0.0f64, 0.0f64);
        for k in 0..self.grid.node_count() {
            let lhs = hstack(&[&DMatrix::zeros(n, n), &(-self.p_lambda.node(k))]) + self.s_mat.node(k);
            let rhs = -(self.big_p.node(k).rows(n, n));
            worst.0 = worst.0.max((lhs - rhs).amax());
            worst.1 = worst.1.max((self.s_vec.node(k) - self.phi.node(k).rows(n, n)).amax());
        }
        worst
    }
}
