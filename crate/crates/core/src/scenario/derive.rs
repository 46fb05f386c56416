use nalgebra::DMatrix;

use super::params::ScenarioParams;
use crate::numerics::{symmetrize, Schedule};

/// Cost cross terms of the limiting major problem, pointwise in time.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedCoefficients {
    pub k0: Schedule<DMatrix<f64>>,
    pub m0: Schedule<DMatrix<f64>>,
    pub m: Schedule<DMatrix<f64>>,
    pub nu0: Schedule<DMatrix<f64>>,
    pub nu: Schedule<DMatrix<f64>>,
    pub r_lambda: Schedule<DMatrix<f64>>,
    pub k0f: DMatrix<f64>,
    pub m0f: DMatrix<f64>,
    pub mf: DMatrix<f64>,
    pub nu0f: DMatrix<f64>,
    pub nuf: DMatrix<f64>,
}

/// `(K0, M0, M, nu0, nu)` for one set of tracking weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTerms {
    pub k0: DMatrix<f64>,
    pub m0: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub nu0: DMatrix<f64>,
    pub nu: DMatrix<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn cost_terms(
    q0: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h0: &DMatrix<f64>,
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    eta0: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    lambda: f64,
) -> CostTerms {
    let n = q.nrows();
    let i_h2 = DMatrix::identity(n, n) - h2;
    let qi = q * &i_h2;
    CostTerms {
        k0: -(q0 * h0) - (h1.transpose() * &qi) * lambda,
        m0: symmetrize(&(q0 + (h1.transpose() * q * h1) * lambda)),
        m: symmetrize(&(h0.transpose() * q0 * h0 + (i_h2.transpose() * &qi) * lambda)),
        nu0: (h1.transpose() * q * eta) * lambda - q0 * eta0,
        nu: h0.transpose() * q0 * eta0 + (h2.transpose() * q * eta) * lambda - (q * eta) * lambda,
    }
}

pub fn derive_coefficients(params: &ScenarioParams) -> DerivedCoefficients {
    let lambda = params.lambda;
    let merged = params.coefficients.merged();
    let running = merged.map(|c| cost_terms(&c.q0, &c.q, &c.h0, &c.h1, &c.h2, &c.eta0, &c.eta, lambda));
    let t = &params.terminal;
    let term = cost_terms(&t.q0f, &t.qf, &t.h0f, &t.h1f, &t.h2f, &t.eta0f, &t.etaf, lambda);
    DerivedCoefficients {
        k0: running.map(|c| c.k0.clone()),
        m0: running.map(|c| c.m0.clone()),
        m: running.map(|c| c.m.clone()),
        nu0: running.map(|c| c.nu0.clone()),
        nu: running.map(|c| c.nu.clone()),
        r_lambda: merged.map(|c| &c.r * lambda),
        k0f: term.k0,
        m0f: term.m0,
        mf: term.m,
        nu0f: term.nu0,
        nuf: term.nu,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn zero_coupling_reduces_to_weights() {
        let z = s(0.0);
        let c = cost_terms(&s(2.0), &s(1.5), &z, &z, &z, &z, &z, 3.0);
        assert_eq!(c.k0, z);
        assert_eq!(c.m0, s(2.0));
        assert_eq!(c.m, s(4.5));
        assert_eq!(c.nu0, z);
        assert_eq!(c.nu, z);
    }

    #[test]
    fn scalar_hand_substitution() {
        // K0 = -2*0.5 - 3*1*1*(1-0) = -4; M0 = 2 + 3 = 5; M = 0.25*2 + 3 = 3.5
        // nu0 = 3*1*1*1 - 0 = 3; nu = 0 + 0 - 3 = -3
        let c = cost_terms(&s(2.0), &s(1.0), &s(0.5), &s(1.0), &s(0.0), &s(0.0), &s(1.0), 3.0);
        assert_eq!(c.k0[0], -4.0);
        assert_eq!(c.m0[0], 5.0);
        assert_eq!(c.m[0], 3.5);
        assert_eq!(c.nu0[0], 3.0);
        assert_eq!(c.nu[0], -3.0);
    }

    #[test]
    fn unit_lambda_keeps_control_weight() {
        let p = crate::scenario::builtin::canonical();
        let d = derive_coefficients(&p);
        assert_eq!(d.r_lambda.at(0.0), &DMatrix::identity(1, 1));
    }

    proptest! {
        #[test]
        fn offsets_are_linear_in_targets(
            e0 in proptest::collection::vec(-2.0f64..2.0, 2),
            e in proptest::collection::vec(-2.0f64..2.0, 2),
            h in proptest::collection::vec(-1.0f64..1.0, 12),
            lambda in 0.1f64..4.0,
        ) {
            let m = |k: usize| DMatrix::from_row_slice(2, 2, &h[4 * k..4 * k + 4]);
            let q0 = DMatrix::identity(2, 2);
            let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
            let eta0 = DMatrix::from_column_slice(2, 1, &e0);
            let eta = DMatrix::from_column_slice(2, 1, &e);
            let a = cost_terms(&q0, &q, &m(0), &m(1), &m(2), &eta0, &eta, lambda);
            let b = cost_terms(&q0, &q, &m(0), &m(1), &m(2), &(&eta0 * 2.0), &(&eta * 2.0), lambda);
            prop_assert!((b.nu0 - a.nu0 * 2.0).amax() < 1e-12);
            prop_assert!((b.nu - a.nu * 2.0).amax() < 1e-12);
            prop_assert_eq!(a.m0.clone(), a.m0.transpose());
            prop_assert_eq!(a.m.clone(), a.m.transpose());
        }
    }
}
