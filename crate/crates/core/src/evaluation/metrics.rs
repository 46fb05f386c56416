use nalgebra::DMatrix;

use super::augmented::AugmentedSystem;
use super::moments::MomentPath;
use crate::numerics::TimeGrid;

/// Sup-in-time mean-field approximation errors.
///
/// `eps1 = sup E(|X̄* - m̂|² + |P_λ(X̄* - m̂)|²)` measures the limit population
/// against its mean-field proxy; `eps2 = sup E(|X0 - Ẑ0|² + |X̄ - m̂|² + |û - ū|²)`
/// compares the real closed loop with the limit system.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorMetrics {
    pub eps1: f64,
    pub eps2: f64,
}

/// Running supremum of the error integrands, fed node by node.
pub struct MetricsTracker<'a> {
    sys: &'a AugmentedSystem,
    grid: TimeGrid,
    pub current: ErrorMetrics,
}

impl<'a> MetricsTracker<'a> {
    pub fn new(sys: &'a AugmentedSystem) -> Self {
        Self {
            sys,
            grid: *sys.law().grid(),
            current: ErrorMetrics::default(),
        }
    }

    pub fn observe(&mut self, node: usize, mean: &DMatrix<f64>, cov: &DMatrix<f64>) {
        let m = self.sys.macro_moments(mean, cov);
        let (e1, e2) = self.sys.error_macros(self.grid.node_stage(node));
        self.current.eps1 = self.current.eps1.max(e1.expect(&m));
        self.current.eps2 = self.current.eps2.max(e2.expect(&m));
    }
}

pub fn meanfield_error_metrics(moments: &MomentPath, sys: &AugmentedSystem) -> ErrorMetrics {
    let mut t = MetricsTracker::new(sys);
    for k in 0..moments.grid.node_count() {
        t.observe(k, &moments.mean[k], &moments.cov[k]);
    }
    t.current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::augmented::build_augmented;
    use crate::evaluation::moments::propagate_moments;
    use crate::meanfield::solve_mean_field;
    use crate::scenario::{builtin, MinorInit, ScenarioParams};

    fn noiseless(mut p: ScenarioParams) -> ScenarioParams {
        p.coefficients.d0 = p.coefficients.d0.map(|m| m * 0.0);
        p.coefficients.d = p.coefficients.d.map(|m| m * 0.0);
        p
    }

    fn metrics(p: &ScenarioParams, n_minor: usize) -> ErrorMetrics {
        let g = p.grid(200).unwrap();
        let law = solve_mean_field(p, &g).unwrap().law;
        let sys = build_augmented(&law, n_minor).unwrap();
        let m = propagate_moments(&sys, None, &g).unwrap();
        meanfield_error_metrics(&m, &sys)
    }

    #[test]
    fn noiseless_exchangeable_population_has_no_error() {
        let p = noiseless(builtin::canonical());
        let e = metrics(&p, 5);
        assert!(e.eps1 < 1e-20 && e.eps2 < 1e-20, "{e:?}");
    }

    #[test]
    fn initial_bias_propagates() {
        let mut p = noiseless(builtin::canonical());
        let delta = 0.2;
        p.minor_init = MinorInit::Constant(&p.m0 + DMatrix::from_element(1, 1, delta));
        let e = metrics(&p, 5);
        // at t = 0 the population mean is off by exactly delta
        assert!(e.eps2 >= delta * delta, "{e:?}");
        assert!(e.eps1 >= delta * delta);
    }

    #[test]
    fn noise_makes_errors_positive() {
        let e = metrics(&builtin::canonical(), 4);
        assert!(e.eps1 > 0.0 && e.eps2 > 0.0);
    }
}
