use std::ops::Range;

use nalgebra::DMatrix;

use super::cost::{CostFunctional, QuadForm};
use super::sde::{AffineSde, DriftOp, Loading, StageCoefficients};
use super::EvaluationError;
use crate::meanfield::DecentralizedLaw;
use crate::numerics::{hstack, vstack, BlockOperator, NoiseLoading, Stage};

/// Default cap on the augmented dimension `(2N+3)n`.
pub const AUGMENTED_DIM_CAP: usize = 2048;

/// Closed loop of the finite population under the decentralized law,
/// simulated jointly with the limit system that generates the controls.
///
/// Block layout: `X0`, `X1 … XN`, `Ẑ0`, `m̂`, `X̂1* … X̂N*`. The real blocks
/// evolve under the finite-population dynamics with controls computed
/// from the limit blocks; `W0` and `Wi` drive real and limit blocks alike.
#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    law: DecentralizedLaw,
    n_minor: usize,
    x_init: DMatrix<f64>,
}

/// Limit-side summary of the augmented state: `ζ = (X0, X̄, Ẑ0, m̂, X̄*)`
/// plus the population second moments the cost needs.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroMoments {
    pub mean: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    /// `(1/N) Σ E[Xi Xiᵀ]`
    pub real_second: DMatrix<f64>,
    /// `(1/N) Σ E[X̂i* X̂i*ᵀ]`
    pub limit_second: DMatrix<f64>,
}

/// `Σ_k E|L_k ζ + l_k|²_{W_k} + tr(Wr · real_second) + tr(Wl · limit_second)`
#[derive(Clone, Debug, PartialEq)]
pub struct MacroForm {
    pub terms: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
    pub real_weight: DMatrix<f64>,
    pub limit_weight: DMatrix<f64>,
}

impl MacroForm {
    fn new(n: usize) -> Self {
        Self {
            terms: Vec::new(),
            real_weight: DMatrix::zeros(n, n),
            limit_weight: DMatrix::zeros(n, n),
        }
    }

    pub fn expect(&self, m: &MacroMoments) -> f64 {
        let mut total = self.real_weight.dot(&m.real_second) + self.limit_weight.dot(&m.limit_second);
        for (l, off, w) in &self.terms {
            let e = l * &m.mean + off;
            let lw = w * l;
            total += (e.transpose() * w * &e)[0] + (l.transpose() * lw).dot(&m.cov);
        }
        total
    }
}

fn zeros(r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::zeros(r, c)
}

pub fn build_augmented(law: &DecentralizedLaw, n_minor: usize) -> Result<AugmentedSystem, EvaluationError> {
    build_augmented_capped(law, n_minor, AUGMENTED_DIM_CAP)
}

pub fn build_augmented_capped(
    law: &DecentralizedLaw,
    n_minor: usize,
    cap: usize,
) -> Result<AugmentedSystem, EvaluationError> {
    let n = law.n();
    let minors = law.params().minor_initial_states(n_minor)?;
    let dim = (2 * n_minor + 3) * n;
    if dim > cap {
        return Err(EvaluationError::DimensionCap { dim, cap });
    }
    let p = law.params();
    let mut parts = vec![&p.z0];
    parts.extend(minors.iter());
    parts.push(&p.z0);
    parts.push(&p.m0);
    parts.extend(minors.iter());
    Ok(AugmentedSystem {
        law: law.clone(),
        n_minor,
        x_init: vstack(&parts),
    })
}

impl AugmentedSystem {
    pub fn n_minor(&self) -> usize {
        self.n_minor
    }

    pub fn width(&self) -> usize {
        self.law.n()
    }

    pub fn nblocks(&self) -> usize {
        2 * self.n_minor + 3
    }

    pub fn law(&self) -> &DecentralizedLaw {
        &self.law
    }

    pub fn real_minors(&self) -> Range<usize> {
        1..self.n_minor + 1
    }

    pub fn limit_major(&self) -> usize {
        self.n_minor + 1
    }

    pub fn limit_mean(&self) -> usize {
        self.n_minor + 2
    }

    pub fn limit_minors(&self) -> Range<usize> {
        self.n_minor + 3..2 * self.n_minor + 3
    }

    fn zeta_blocks(&self) -> [Range<usize>; 5] {
        let z = self.limit_major();
        [0..1, self.real_minors(), z..z + 1, z + 1..z + 2, self.limit_minors()]
    }

    fn block_avg(&self, x: &DMatrix<f64>, rows: &Range<usize>) -> DMatrix<f64> {
        let w = self.width();
        let mut acc = zeros(w, x.ncols());
        for b in rows.clone() {
            acc += x.rows(b * w, w);
        }
        acc / rows.len() as f64
    }

    pub fn macro_moments(&self, mean: &DMatrix<f64>, cov: &DMatrix<f64>) -> MacroMoments {
        let w = self.width();
        let blocks = self.zeta_blocks();
        let zmean = vstack(&blocks.iter().map(|r| self.block_avg(mean, r)).collect::<Vec<_>>().iter().collect::<Vec<_>>());
        // Σ Mᵀ column blocks, then M (Σ Mᵀ)
        let cols: Vec<DMatrix<f64>> = blocks
            .iter()
            .map(|r| {
                let mut acc = zeros(cov.nrows(), w);
                for b in r.clone() {
                    acc += cov.columns(b * w, w);
                }
                acc / r.len() as f64
            })
            .collect();
        let sm: DMatrix<f64> = hstack(&cols.iter().collect::<Vec<_>>());
        let zcov = vstack(&blocks.iter().map(|r| self.block_avg(&sm, r)).collect::<Vec<_>>().iter().collect::<Vec<_>>());
        let second = |range: Range<usize>| {
            let mut acc = zeros(w, w);
            for b in range.clone() {
                let mb = mean.rows(b * w, w);
                acc += cov.view((b * w, b * w), (w, w));
                acc += mb * mb.transpose();
            }
            acc / range.len() as f64
        };
        MacroMoments {
            mean: zmean,
            cov: zcov,
            real_second: second(self.real_minors()),
            limit_second: second(self.limit_minors()),
        }
    }

    /// Dense map `ξ ↦ ζ`.
    pub fn macro_map(&self) -> DMatrix<f64> {
        let w = self.width();
        let mut m = zeros(5 * w, self.dim());
        for (j, r) in self.zeta_blocks().iter().enumerate() {
            let s = 1.0 / r.len() as f64;
            for b in r.clone() {
                let mut v = m.view_mut((j * w, b * w), (w, w));
                v += DMatrix::identity(w, w) * s;
            }
        }
        m
    }

    /// Lifts a macro form to a dense form on the full augmented state.
    pub fn lift(&self, f: &MacroForm) -> QuadForm {
        let w = self.width();
        let m = self.macro_map();
        let mut q = QuadForm::zero(self.dim());
        for (l, off, wt) in &f.terms {
            q.add_affine_square(&(l * &m), off, wt);
        }
        let nf = self.n_minor as f64;
        for (range, wt) in [(self.real_minors(), &f.real_weight), (self.limit_minors(), &f.limit_weight)] {
            for b in range {
                let mut v = q.w.view_mut((b * w, b * w), (w, w));
                v += wt / nf;
            }
        }
        q
    }

    /// Row map selecting `ζ` blocks: `parts[j]` multiplies block `j`.
    fn zrow(&self, rows: usize, parts: &[(usize, &DMatrix<f64>)]) -> DMatrix<f64> {
        let w = self.width();
        let mut l = zeros(rows, 5 * w);
        for (j, m) in parts {
            let mut v = l.view_mut((0, j * w), (rows, m.ncols()));
            v += *m;
        }
        l
    }

    /// Running social-cost integrand of the real population.
    pub fn running_macro(&self, st: Stage) -> MacroForm {
        let n = self.width();
        let p = self.law.params();
        let g = self.law.grid();
        let c = &p.coefficients;
        let lam = p.lambda;
        let gains = self.law.gains_at(st);
        let id = DMatrix::identity(n, n);
        let (h0, h1, h2) = (c.h0.at_stage(g, st), c.h1.at_stage(g, st), c.h2.at_stage(g, st));
        let (q0, q, r0, r) = (c.q0.at_stage(g, st), c.q.at_stage(g, st), c.r0.at_stage(g, st), c.r.at_stage(g, st));
        let n1 = r.nrows();
        let zero_n = zeros(n, 1);
        let zero_u = zeros(n1, 1);
        let mut f = MacroForm::new(n);
        f.terms.push((self.zrow(n, &[(0, &id), (1, &-h0)]), -c.eta0.at_stage(g, st), q0.clone()));
        f.terms.push((self.zrow(n1, &[(2, &gains.gamma0_z)]), gains.gamma0.clone(), r0.clone()));
        f.terms.push((self.zrow(n, &[(0, &-h1), (1, &(&id - h2))]), -c.eta.at_stage(g, st), q * lam));
        f.terms.push((self.zrow(n, &[(1, &id)]), zero_n, q * -lam));
        f.real_weight = q * lam;
        f.terms.push((
            self.zrow(n1, &[(2, &gains.gamma_z), (4, &gains.gamma_i)]),
            gains.gamma_i0.clone(),
            r * lam,
        ));
        f.terms.push((self.zrow(n1, &[(4, &gains.gamma_i)]), zero_u, r * -lam));
        f.limit_weight = gains.gamma_i.transpose() * r * &gains.gamma_i * lam;
        f
    }

    pub fn terminal_macro(&self) -> MacroForm {
        let n = self.width();
        let p = self.law.params();
        let t = &p.terminal;
        let lam = p.lambda;
        let id = DMatrix::identity(n, n);
        let mut f = MacroForm::new(n);
        f.terms.push((self.zrow(n, &[(0, &id), (1, &-&t.h0f)]), -&t.eta0f, t.q0f.clone()));
        f.terms.push((self.zrow(n, &[(0, &-&t.h1f), (1, &(&id - &t.h2f))]), -&t.etaf, &t.qf * lam));
        f.terms.push((self.zrow(n, &[(1, &id)]), zeros(n, 1), &t.qf * -lam));
        f.real_weight = &t.qf * lam;
        f
    }

    /// Integrands of the two approximation-error metrics at one stage:
    /// `(|X̄* - m̂|² + |P_λ(X̄* - m̂)|²,  |X0 - Ẑ0|² + |X̄ - m̂|² + |û - ū|²)`.
    pub fn error_macros(&self, st: Stage) -> (MacroForm, MacroForm) {
        let n = self.width();
        let gains = self.law.gains_at(st);
        let pl = self.law.p_lambda.at_stage(st);
        let n1 = gains.gamma_i.nrows();
        let id = DMatrix::identity(n, n);
        let idu = DMatrix::identity(n1, n1);
        let zn = zeros(n, 1);
        let mut e1 = MacroForm::new(n);
        e1.terms.push((self.zrow(n, &[(3, &-&id), (4, &id)]), zn.clone(), id.clone()));
        e1.terms.push((self.zrow(n, &[(3, &-pl), (4, pl)]), zn.clone(), id.clone()));
        let mut e2 = MacroForm::new(n);
        e2.terms.push((self.zrow(n, &[(0, &id), (2, &-&id)]), zn.clone(), id.clone()));
        e2.terms.push((self.zrow(n, &[(1, &id), (3, &-&id)]), zn, id.clone()));
        e2.terms.push((
            self.zrow(n1, &[(2, &(&gains.gamma_z - &gains.ubar_z)), (4, &gains.gamma_i)]),
            &gains.gamma_i0 - &gains.ubar,
            idu,
        ));
        (e1, e2)
    }

    fn drift(&self, st: Stage) -> (BlockOperator, DMatrix<f64>, NoiseLoading) {
        let w = self.width();
        let nb = self.nblocks();
        let p = self.law.params();
        let g = self.law.grid();
        let c = &p.coefficients;
        let gains = self.law.gains_at(st);
        let (a0, b0, f0, d0) = (c.a0.at_stage(g, st), c.b0.at_stage(g, st), c.f0.at_stage(g, st), c.d0.at_stage(g, st));
        let (a, b, f, gg, d) = (c.a.at_stage(g, st), c.b.at_stage(g, st), c.f.at_stage(g, st), c.g.at_stage(g, st), c.d.at_stage(g, st));
        let zb = self.limit_major();
        let mut op = BlockOperator::new(w, nb);
        let mut offset = zeros(self.dim(), 1);
        let real = self.real_minors();
        let limit = self.limit_minors();

        op.add_block(0, 0, a0.clone());
        op.add_mean(0..1, real.clone(), f0.clone());
        op.add_span(0, zb, &(b0 * &gains.gamma0_z));
        offset.rows_mut(0, w).copy_from(&(b0 * &gains.gamma0));

        op.add_mean(real.clone(), real.clone(), f.clone());
        let b_gi = b * &gains.gamma_i;
        let b_gz = b * &gains.gamma_z;
        let b_g0 = b * &gains.gamma_i0;
        for (i, r) in real.clone().zip(limit.clone()) {
            op.add_block(i, i, a.clone());
            op.add_block(i, 0, gg.clone());
            op.add_block(i, r, b_gi.clone());
            op.add_span(i, zb, &b_gz);
            offset.rows_mut(i * w, w).copy_from(&b_g0);
        }

        op.add_span(zb, zb, &gains.a_z);
        offset.rows_mut(zb * w, 2 * w).copy_from(&gains.b_z);
        for r in limit.clone() {
            op.add_block(r, r, gains.a_minor.clone());
            op.add_span(r, zb, &gains.c_minor);
            offset.rows_mut(r * w, w).copy_from(&gains.b_minor);
        }

        let mut noise = NoiseLoading::new(w, nb);
        noise.add_source(vec![(0, d0.clone()), (zb, d0.clone())]);
        for (i, r) in real.zip(limit) {
            noise.add_source(vec![(i, d.clone()), (r, d.clone())]);
        }
        (op, offset, noise)
    }
}

impl AffineSde for AugmentedSystem {
    fn dim(&self) -> usize {
        self.nblocks() * self.width()
    }

    fn initial_state(&self) -> DMatrix<f64> {
        self.x_init.clone()
    }

    fn coefficients(&self, st: Stage) -> StageCoefficients {
        let (op, offset, noise) = self.drift(st);
        StageCoefficients {
            drift: DriftOp::Block(op),
            offset,
            noise: Loading::Block(noise),
        }
    }
}

/// Social cost of the real population in an [`AugmentedSystem`].
pub struct RealSocialCost<'a>(pub &'a AugmentedSystem);

impl CostFunctional for RealSocialCost<'_> {
    fn running_form(&self, st: Stage) -> QuadForm {
        self.0.lift(&self.0.running_macro(st))
    }

    fn terminal_form(&self) -> QuadForm {
        self.0.lift(&self.0.terminal_macro())
    }

    fn running_expected(&self, st: Stage, mean: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
        self.0.running_macro(st).expect(&self.0.macro_moments(mean, cov))
    }

    fn terminal_expected(&self, mean: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
        self.0.terminal_macro().expect(&self.0.macro_moments(mean, cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::solve_mean_field;
    use crate::numerics::{StagePoint, TimeGrid};
    use crate::scenario::{builtin, ScenarioParams};

    fn law(p: &ScenarioParams, steps: usize) -> (DecentralizedLaw, TimeGrid) {
        let g = p.grid(steps).unwrap();
        (solve_mean_field(p, &g).unwrap().law, g)
    }

    #[test]
    fn each_source_loads_one_real_and_one_limit_block() {
        let p = builtin::canonical();
        let (l, g) = law(&p, 20);
        let sys = build_augmented(&l, 8).unwrap();
        let st = g.stage(3, StagePoint::Mid);
        let dense = sys.coefficients(st).noise.to_dense();
        assert_eq!(dense.ncols(), 9);
        for s in 0..9 {
            let rows: Vec<usize> = (0..sys.nblocks()).filter(|&b| dense[(b, s)] != 0.0).collect();
            let want = if s == 0 { vec![0, 9] } else { vec![s, 10 + s] };
            assert_eq!(rows, want, "source {s}");
        }
    }

    #[test]
    fn noiseless_scenario_has_zero_loading() {
        let mut p = builtin::canonical();
        p.coefficients.d0 = p.coefficients.d0.map(|m| m * 0.0);
        p.coefficients.d = p.coefficients.d.map(|m| m * 0.0);
        let (l, g) = law(&p, 20);
        let sys = build_augmented(&l, 2).unwrap();
        let mut gram = DMatrix::zeros(sys.dim(), sys.dim());
        sys.coefficients(g.stage(0, StagePoint::Start)).noise.add_gram_to(&mut gram);
        assert_eq!(gram.amax(), 0.0);
    }

    #[test]
    fn uncoupled_single_minor_only_links_through_controls() {
        let p = builtin::decoupled();
        let (l, g) = law(&p, 20);
        let sys = build_augmented(&l, 1).unwrap();
        let a = sys.coefficients(g.stage(0, StagePoint::Start)).drift.to_dense();
        // real blocks 0,1 never feed the limit blocks 2,3,4
        for r in 2..5 {
            for c in 0..2 {
                assert_eq!(a[(r, c)], 0.0);
            }
        }
        // real blocks do not feed each other either
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(a[(1, 0)], 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let p = builtin::canonical();
        let (l, _) = law(&p, 20);
        assert!(matches!(
            build_augmented_capped(&l, 10, 20),
            Err(EvaluationError::DimensionCap { dim: 23, cap: 20 })
        ));
    }

    #[test]
    fn running_cost_matches_direct_integrand() {
        let p = builtin::canonical();
        let (l, g) = law(&p, 20);
        let n_minor = 3;
        let sys = build_augmented(&l, n_minor).unwrap();
        let x = DMatrix::from_fn(sys.dim(), 1, |i, _| ((i * 5) % 7) as f64 * 0.3 - 0.8);
        let st = g.stage(7, StagePoint::End);
        let got = sys.running_macro(st).expect(&sys.macro_moments(&x, &DMatrix::zeros(sys.dim(), sys.dim())));

        let c = p.coefficients.at(st.t - 1e-9);
        let gains = l.gains_at(st);
        let at = |b: usize| x.rows(b, 1).into_owned();
        let x0 = at(0);
        let xs: Vec<_> = (1..=n_minor).map(at).collect();
        let xbar = xs.iter().fold(DMatrix::zeros(1, 1), |a, b| a + b) / n_minor as f64;
        let z = vstack(&[&at(n_minor + 1), &at(n_minor + 2)]);
        let u0 = &gains.gamma0_z * &z + &gains.gamma0;
        let e0 = &x0 - &c.h0 * &xbar - &c.eta0;
        let mut want = (e0.transpose() * &c.q0 * &e0)[0] + (u0.transpose() * &c.r0 * &u0)[0];
        for i in 0..n_minor {
            let xi_hat = at(n_minor + 3 + i);
            let ui = &gains.gamma_i * xi_hat + &gains.gamma_z * &z + &gains.gamma_i0;
            let e = &xs[i] - &c.h1 * &x0 - &c.h2 * &xbar - &c.eta;
            want += p.lambda / n_minor as f64 * ((e.transpose() * &c.q * &e)[0] + (ui.transpose() * &c.r * &ui)[0]);
        }
        assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()), "{got} {want}");
    }

    #[test]
    fn macro_expectation_matches_dense_lift() {
        let p = builtin::canonical();
        let (l, g) = law(&p, 20);
        let sys = build_augmented(&l, 3).unwrap();
        let d = sys.dim();
        let mean = DMatrix::from_fn(d, 1, |i, _| 0.1 * i as f64 - 0.3);
        let root = DMatrix::from_fn(d, d, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2);
        let cov = &root * root.transpose();
        let st = g.stage(4, StagePoint::Mid);
        let f = sys.running_macro(st);
        let a = f.expect(&sys.macro_moments(&mean, &cov));
        let b = sys.lift(&f).expect(&mean, &cov);
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} {b}");
        let t = sys.terminal_macro();
        let a = t.expect(&sys.macro_moments(&mean, &cov));
        let b = sys.lift(&t).expect(&mean, &cov);
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }
}
