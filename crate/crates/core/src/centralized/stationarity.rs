use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::joint::JointLQ;
use super::solve::CentralizedSolution;
use super::CentralizedError;
use crate::evaluation::{
    propagate_moments, social_cost_exact, DenseCost, DenseSde, DriftOp, Loading, QuadForm,
    StageCoefficients,
};
use crate::numerics::{Stage, TimeGrid};

/// Number of constant pieces in a perturbation direction.
pub const PERTURBATION_SEGMENTS: usize = 16;

/// Open-loop control perturbation, piecewise constant on equal time segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub segments: Vec<DMatrix<f64>>,
}

impl Perturbation {
    pub fn zero(control_dim: usize) -> Self {
        Self {
            segments: vec![DMatrix::zeros(control_dim, 1); PERTURBATION_SEGMENTS],
        }
    }

    pub fn at(&self, grid: &TimeGrid, st: Stage) -> &DMatrix<f64> {
        let j = (st.interval * self.segments.len() / grid.steps()).min(self.segments.len() - 1);
        &self.segments[j]
    }
}

/// Standard normal directions; direction `j` uses stream `j` of `ChaCha8(seed)`.
pub fn perturbation_directions(joint: &JointLQ, count: usize, seed: u64) -> Vec<Perturbation> {
    let m = joint.control_dim();
    (0..count)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            Perturbation {
                segments: (0..PERTURBATION_SEGMENTS)
                    .map(|_| DMatrix::from_fn(m, 1, |_, _| rng.sample(StandardNormal)))
                    .collect(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionCheck {
    pub j_plus: f64,
    pub j_minus: f64,
    /// `(J(ε) - J(-ε)) / 2ε`, zero at a stationary point.
    pub slope: f64,
    /// `(J(ε) - J(0)) / ε`, which shrinks linearly with `ε`.
    pub forward_slope: f64,
    /// `J(ε) + J(-ε) - 2 J(0)`
    pub second_difference: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReport {
    pub eps: f64,
    /// Exact cost of the unperturbed optimal feedback.
    pub j_opt: f64,
    pub directions: Vec<DirectionCheck>,
}

impl StationarityReport {
    pub fn max_abs_slope(&self) -> f64 {
        self.directions.iter().map(|d| d.slope.abs()).fold(0.0, f64::max)
    }

    pub fn min_second_difference(&self) -> f64 {
        self.directions.iter().map(|d| d.second_difference).fold(f64::INFINITY, f64::min)
    }

    /// `|slope| ≤ rel·(1 + |J|)` and strictly positive curvature in every direction.
    pub fn passes(&self, rel: f64) -> bool {
        self.max_abs_slope() <= rel * (1.0 + self.j_opt.abs()) && self.min_second_difference() > 0.0
    }
}

struct DenseJoint {
    ahat: DMatrix<f64>,
    bhat: DMatrix<f64>,
    rhat: DMatrix<f64>,
    gain: DMatrix<f64>,
    dhat: DMatrix<f64>,
}

/// Exact social cost of `u = ǔ(x) + ε v(t)` from the moments of the
/// perturbed closed loop.
fn perturbed_cost(
    joint: &JointLQ,
    sol: &CentralizedSolution,
    grid: &TimeGrid,
    dense: &[DenseJoint],
    v: &Perturbation,
    eps: f64,
) -> Result<f64, CentralizedError> {
    let piece_of = |st: Stage| joint.pieces.piece_index(grid.node(st.interval) + 0.5 * grid.dt());
    let feedback = |st: Stage| {
        let d = &dense[piece_of(st)];
        let k = -(&d.gain * sol.pi.p.at_stage(st));
        let k0 = -(&d.gain * sol.g.at_stage(st)) + v.at(grid, st) * eps;
        (k, k0)
    };
    let sde = DenseSde::new(joint.x_init.clone(), |st: Stage| {
        let d = &dense[piece_of(st)];
        let (k, k0) = feedback(st);
        StageCoefficients {
            drift: DriftOp::Dense(&d.ahat + &d.bhat * k),
            offset: &d.bhat * k0,
            noise: Loading::Dense(d.dhat.clone()),
        }
    });
    let running = |st: Stage| {
        let d = &dense[piece_of(st)];
        let c = &joint.piece(grid, st).cost;
        let (k, k0) = feedback(st);
        let mut f = QuadForm {
            w: c.q.clone(),
            v: c.s.clone(),
            c: c.c,
        };
        f.add_affine_square(&k, &k0, &d.rhat);
        f
    };
    let t = &joint.terminal;
    let terminal = QuadForm {
        w: t.q.clone(),
        v: t.s.clone(),
        c: t.c,
    };
    let cost = DenseCost::new(running, terminal);
    let moments = propagate_moments(&sde, Some(&cost), grid).map_err(|e| CentralizedError::Evaluation(e.to_string()))?;
    Ok(social_cost_exact(&moments, &cost))
}

/// Centered finite differences of the exact social cost along each direction.
pub fn centralized_stationarity_check(
    joint: &JointLQ,
    sol: &CentralizedSolution,
    grid: &TimeGrid,
    directions: &[Perturbation],
    eps: f64,
) -> Result<StationarityReport, CentralizedError> {
    if !sol.pi.p.grid().eq(grid) {
        return Err(CentralizedError::Evaluation("solution lives on a different grid".into()));
    }
    let dense: Vec<DenseJoint> = joint
        .pieces
        .values()
        .iter()
        .map(|p| DenseJoint {
            ahat: p.ahat_dense(),
            bhat: p.bhat(joint.n_minor),
            rhat: p.rhat(joint.n_minor, joint.lambda),
            gain: p.gain_map(joint.n_minor, joint.lambda),
            dhat: p.dhat(joint.n_minor),
        })
        .collect();
    let zero = Perturbation::zero(joint.control_dim());
    let j0 = perturbed_cost(joint, sol, grid, &dense, &zero, 0.0)?;
    let mut out = Vec::with_capacity(directions.len());
    for v in directions {
        let jp = perturbed_cost(joint, sol, grid, &dense, v, eps)?;
        let jm = perturbed_cost(joint, sol, grid, &dense, v, -eps)?;
        out.push(DirectionCheck {
            j_plus: jp,
            j_minus: jm,
            slope: (jp - jm) / (2.0 * eps),
            forward_slope: (jp - j0) / eps,
            second_difference: jp + jm - 2.0 * j0,
        });
    }
    Ok(StationarityReport {
        eps,
        j_opt: j0,
        directions: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centralized::{assemble_joint, solve_centralized};
    use crate::scenario::builtin;

    fn setup(steps: usize) -> (JointLQ, CentralizedSolution, TimeGrid) {
        let p = builtin::canonical();
        let g = p.grid(steps).unwrap();
        let j = assemble_joint(&p, 2).unwrap();
        let s = solve_centralized(&j, &g).unwrap();
        (j, s, g)
    }

    #[test]
    fn zero_direction_is_flat() {
        let (j, s, g) = setup(100);
        let r = centralized_stationarity_check(&j, &s, &g, &[Perturbation::zero(3)], 1e-2).unwrap();
        assert_eq!(r.directions[0].slope, 0.0);
        assert_eq!(r.directions[0].second_difference, 0.0);
    }

    #[test]
    fn exact_cost_of_the_optimum_matches_the_value_function() {
        let (j, s, g) = setup(400);
        let r = centralized_stationarity_check(&j, &s, &g, &[], 1e-2).unwrap();
        assert!((r.j_opt - s.optimal_cost).abs() < 1e-10, "{} {}", r.j_opt, s.optimal_cost);
    }

    #[test]
    fn random_directions_are_stationary_and_convex() {
        let (j, s, g) = setup(400);
        let dirs = perturbation_directions(&j, 3, 11);
        let r = centralized_stationarity_check(&j, &s, &g, &dirs, 1e-2).unwrap();
        assert!(r.passes(1e-6), "{r:?}");
        let half = centralized_stationarity_check(&j, &s, &g, &dirs, 5e-3).unwrap();
        for (a, b) in r.directions.iter().zip(&half.directions) {
            let ratio = a.forward_slope / b.forward_slope;
            assert!((ratio - 2.0).abs() < 1e-3, "ratio {ratio}");
        }
    }

    #[test]
    fn directions_are_reproducible() {
        let (j, _, _) = setup(10);
        assert_eq!(perturbation_directions(&j, 4, 5), perturbation_directions(&j, 4, 5));
        assert_ne!(perturbation_directions(&j, 2, 5)[0], perturbation_directions(&j, 2, 5)[1]);
    }
}
