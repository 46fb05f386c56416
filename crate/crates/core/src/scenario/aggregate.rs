use nalgebra::DMatrix;

use super::derive::DerivedCoefficients;
use super::params::ScenarioParams;
use super::ScenarioError;
use crate::numerics::{block_diag, hstack, symmetrize, vstack, Schedule};

/// Joint limiting system of the major state and the population mean,
/// `Z = (X0, m)`, with its quadratic cost blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateSystem {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    /// `[A0 F0; G A+F]`
    pub abb: Schedule<DMatrix<f64>>,
    /// `[B0; 0]`
    pub bbb0: Schedule<DMatrix<f64>>,
    /// `[0; B]`
    pub bbb: Schedule<DMatrix<f64>>,
    /// `[D0; 0]`
    pub dbb0: Schedule<DMatrix<f64>>,
    /// `[M0 K0; K0ᵀ M]`
    pub qbb0: Schedule<DMatrix<f64>>,
    /// `[nu0; nu]`
    pub vbb0: Schedule<DMatrix<f64>>,
    /// `blockdiag(B0, B)`
    pub bbb1: Schedule<DMatrix<f64>>,
    /// `blockdiag(R0, λR)`
    pub rbb1: Schedule<DMatrix<f64>>,
    /// `bbb1 · rbb1⁻¹ · bbb1ᵀ`
    pub sbb: Schedule<DMatrix<f64>>,
    /// `bbb0 · R0⁻¹ · bbb0ᵀ`
    pub sbb0: Schedule<DMatrix<f64>>,
    pub r0_inv: Schedule<DMatrix<f64>>,
    pub r_lambda_inv: Schedule<DMatrix<f64>>,
    /// `B (λR)⁻¹ Bᵀ`
    pub s_minor: Schedule<DMatrix<f64>>,
    pub qbb0f: DMatrix<f64>,
    pub vbb0f: DMatrix<f64>,
}

fn spd_inverse(m: &DMatrix<f64>, field: &str) -> Result<DMatrix<f64>, ScenarioError> {
    m.clone()
        .cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| ScenarioError::InvalidValue {
            field: field.to_string(),
            reason: "not positive definite".into(),
        })
}

fn cost_block(m0: &DMatrix<f64>, k0: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let top = hstack(&[m0, k0]);
    let bottom = hstack(&[&k0.transpose(), m]);
    symmetrize(&vstack(&[&top, &bottom]))
}

pub fn assemble_aggregate(
    params: &ScenarioParams,
    derived: &DerivedCoefficients,
) -> Result<AggregateSystem, ScenarioError> {
    let d = params.dims;
    let merged = params.coefficients.merged();
    let zn = DMatrix::zeros(d.n, d.n1);
    let mut parts: [Vec<(f64, DMatrix<f64>)>; 13] = Default::default();
    for (&t, c) in merged.starts().iter().zip(merged.values()) {
        let r0_inv = spd_inverse(&c.r0, "coefficients.R0")?;
        let rl = derived.r_lambda.at(t);
        let rl_inv = spd_inverse(rl, "coefficients.R")?;
        let a_row0 = hstack(&[&c.a0, &c.f0]);
        let a_row1 = hstack(&[&c.g, &(&c.a + &c.f)]);
        let bbb0 = vstack(&[&c.b0, &zn]);
        let bbb1 = block_diag(&[&c.b0, &c.b]);
        let rbb1 = block_diag(&[&c.r0, rl]);
        let rbb1_inv = block_diag(&[&r0_inv, &rl_inv]);
        let values = [
            vstack(&[&a_row0, &a_row1]),
            bbb0.clone(),
            vstack(&[&zn, &c.b]),
            vstack(&[&c.d0, &DMatrix::zeros(d.n, d.n2)]),
            cost_block(derived.m0.at(t), derived.k0.at(t), derived.m.at(t)),
            vstack(&[derived.nu0.at(t), derived.nu.at(t)]),
            bbb1.clone(),
            rbb1,
            symmetrize(&(&bbb1 * rbb1_inv * bbb1.transpose())),
            symmetrize(&(&bbb0 * &r0_inv * bbb0.transpose())),
            r0_inv,
            rl_inv.clone(),
            symmetrize(&(&c.b * rl_inv * c.b.transpose())),
        ];
        for (slot, v) in parts.iter_mut().zip(values) {
            slot.push((t, v));
        }
    }
    let mut it = parts.into_iter().map(|p| Schedule::from_segments(p).expect("merged starts"));
    let mut next = || it.next().expect("13 schedules");
    Ok(AggregateSystem {
        n: d.n,
        n1: d.n1,
        n2: d.n2,
        abb: next(),
        bbb0: next(),
        bbb: next(),
        dbb0: next(),
        qbb0: next(),
        vbb0: next(),
        bbb1: next(),
        rbb1: next(),
        sbb: next(),
        sbb0: next(),
        r0_inv: next(),
        r_lambda_inv: next(),
        s_minor: next(),
        qbb0f: cost_block(&derived.m0f, &derived.k0f, &derived.mf),
        vbb0f: vstack(&[&derived.nu0f, &derived.nuf]),
    })
}
