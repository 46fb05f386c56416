use nalgebra::{DMatrix, DVector};

use super::aggregate::AggregateSystem;
use super::params::ScenarioParams;
use super::ScenarioError;
use crate::numerics::{frobenius, hstack, is_psd, sym_sqrt, vstack, PSD_REL_TOL};

/// Bound on `‖Q - U0ᵀU0 - UᵀU‖` (relative to `1 + ‖Q‖_F`) accepted as a certificate.
pub const RECONSTRUCTION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum CertificateOutcome {
    /// Sum-of-squares factorisation with its reconstruction error.
    Decomposed {
        u0: DMatrix<f64>,
        u: DMatrix<f64>,
        residual: f64,
    },
    /// Negative eigenvalue of the aggregate cost block.
    Violated {
        min_eigenvalue: f64,
        eigenvector: DVector<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateEntry {
    /// `"t=<start>"` for a running piece, `"terminal"` for the terminal block.
    pub label: String,
    pub outcome: CertificateOutcome,
    scale: f64,
}

impl CertificateEntry {
    pub fn certified(&self) -> bool {
        matches!(self.outcome, CertificateOutcome::Decomposed { residual, .. }
            if residual <= RECONSTRUCTION_TOL * self.scale)
    }
}

/// One entry per constant piece of the cost block (covering every grid
/// point) plus the terminal block.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdCertificate {
    pub entries: Vec<CertificateEntry>,
}

impl PsdCertificate {
    pub fn all_certified(&self) -> bool {
        self.entries.iter().all(CertificateEntry::certified)
    }

    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| match e.outcome {
                CertificateOutcome::Decomposed { residual, .. } => residual,
                CertificateOutcome::Violated { .. } => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

#[allow(clippy::too_many_arguments)]
fn certify(
    label: String,
    target: &DMatrix<f64>,
    q0: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h0: &DMatrix<f64>,
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    lambda: f64,
    field: &str,
) -> Result<CertificateEntry, ScenarioError> {
    let scale = 1.0 + frobenius(target);
    let check = is_psd(target, PSD_REL_TOL)?;
    if let Some((min_eigenvalue, eigenvector)) = check.witness {
        return Ok(CertificateEntry {
            label,
            outcome: CertificateOutcome::Violated {
                min_eigenvalue,
                eigenvector,
            },
            scale,
        });
    }
    let n = q.nrows();
    let root = |m: &DMatrix<f64>, key: &str| {
        sym_sqrt(m, PSD_REL_TOL).map_err(|e| ScenarioError::InvalidValue {
            field: format!("{field}.{key}"),
            reason: format!("square root failed: {e}"),
        })
    };
    let r0 = root(q0, "Q0")?;
    let r = root(q, "Q")?;
    let zeros = DMatrix::zeros(n, 2 * n);
    let u0 = vstack(&[&hstack(&[&r0, &(-(&r0 * h0))]), &zeros]);
    let i_h2 = DMatrix::identity(n, n) - h2;
    let u = vstack(&[&hstack(&[&(&r * h1), &(-(&r * i_h2))]), &zeros]) * lambda.sqrt();
    let rebuilt = u0.transpose() * &u0 + u.transpose() * &u;
    let residual = (target - rebuilt).amax();
    Ok(CertificateEntry {
        label,
        outcome: CertificateOutcome::Decomposed { u0, u, residual },
        scale,
    })
}

/// Certifies the aggregate cost blocks as sums of squares `U0ᵀU0 + UᵀU`,
/// or returns an eigenvector witness for a block that is not PSD.
pub fn check_q0_psd(
    params: &ScenarioParams,
    agg: &AggregateSystem,
) -> Result<PsdCertificate, ScenarioError> {
    let mut entries = Vec::new();
    for (&t, target) in agg.qbb0.starts().iter().zip(agg.qbb0.values()) {
        let c = params.coefficients.at(t);
        entries.push(certify(
            format!("t={t}"),
            target,
            &c.q0,
            &c.q,
            &c.h0,
            &c.h1,
            &c.h2,
            params.lambda,
            "coefficients",
        )?);
    }
    let tm = &params.terminal;
    entries.push(certify(
        "terminal".into(),
        &agg.qbb0f,
        &tm.q0f,
        &tm.qf,
        &tm.h0f,
        &tm.h1f,
        &tm.h2f,
        params.lambda,
        "terminal",
    )?);
    Ok(PsdCertificate { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Schedule;
    use crate::scenario::{assemble_aggregate, builtin, derive_coefficients};

    fn cert(p: &ScenarioParams) -> (AggregateSystem, PsdCertificate) {
        let agg = assemble_aggregate(p, &derive_coefficients(p)).unwrap();
        let c = check_q0_psd(p, &agg).unwrap();
        (agg, c)
    }

    #[test]
    fn canonical_and_decoupled_certify() {
        for p in [builtin::canonical(), builtin::decoupled()] {
            let (_, c) = cert(&p);
            assert!(c.all_certified(), "{c:?}");
            assert!(c.max_residual() <= 1e-12);
        }
    }

    #[test]
    fn zero_coupling_factor_has_no_cross_block() {
        let (_, c) = cert(&builtin::decoupled());
        match &c.entries[0].outcome {
            CertificateOutcome::Decomposed { u0, u, .. } => {
                assert_eq!(u0[(0, 1)], 0.0);
                assert_eq!(u[(0, 0)], 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_tracking_weights_reconstruct() {
        // Q0 = Q = I, H0 = H1 = H2 = I, lambda = 1: block [2I -I; -I I]
        let mut p = builtin::decoupled();
        p.dims.n = 2;
        p.dims.n1 = 2;
        p.dims.n2 = 2;
        let i = DMatrix::<f64>::identity(2, 2);
        let c = &mut p.coefficients;
        for s in [&mut c.q0, &mut c.q, &mut c.h0, &mut c.h1, &mut c.h2, &mut c.r0, &mut c.r, &mut c.b0, &mut c.b] {
            *s = Schedule::constant(i.clone());
        }
        for s in [&mut c.a0, &mut c.a, &mut c.f0, &mut c.f, &mut c.g, &mut c.d0, &mut c.d] {
            *s = Schedule::constant(DMatrix::zeros(2, 2));
        }
        c.eta0 = Schedule::constant(DMatrix::zeros(2, 1));
        c.eta = Schedule::constant(DMatrix::zeros(2, 1));
        let t = &mut p.terminal;
        t.q0f = i.clone();
        t.qf = i.clone();
        t.h0f = DMatrix::zeros(2, 2);
        t.h1f = DMatrix::zeros(2, 2);
        t.h2f = DMatrix::zeros(2, 2);
        t.eta0f = DMatrix::zeros(2, 1);
        t.etaf = DMatrix::zeros(2, 1);
        let (agg, c) = cert(&p);
        let q = agg.qbb0.at(0.0);
        assert_eq!(q[(0, 0)], 2.0);
        assert_eq!(q[(0, 2)], -1.0);
        assert_eq!(q[(2, 2)], 1.0);
        assert_eq!(q[(0, 1)], 0.0);
        assert!(c.all_certified());
        assert!(c.max_residual() <= 1e-12);
    }

    #[test]
    fn tampered_block_yields_witness() {
        let p = builtin::canonical();
        let (mut agg, _) = cert(&p);
        agg.qbb0 = Schedule::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]));
        let c = check_q0_psd(&p, &agg).unwrap();
        assert!(!c.all_certified());
        match &c.entries[0].outcome {
            CertificateOutcome::Violated { min_eigenvalue, eigenvector } => {
                assert_eq!(*min_eigenvalue, -0.5);
                assert!((eigenvector[1].abs() - 1.0).abs() < 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }
}
