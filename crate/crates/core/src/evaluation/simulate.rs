use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::cost::{CostFunctional, QuadForm};
use super::sde::AffineSde;
use super::EvaluationError;
use crate::numerics::{StagePoint, TimeGrid};

/// Simulation works on dense per-interval coefficients; this bounds their memory.
pub const SIMULATION_DIM_CAP: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct PathSummary {
    pub cost: f64,
    pub terminal: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub n_paths: usize,
    pub mean: f64,
    pub std_error: f64,
    pub paths: Vec<PathSummary>,
}

struct DenseStep {
    a: DMatrix<f64>,
    b: DVector<f64>,
    l: DMatrix<f64>,
}

struct Form {
    w: DMatrix<f64>,
    v: DVector<f64>,
    c: f64,
}

impl From<QuadForm> for Form {
    fn from(q: QuadForm) -> Self {
        Self {
            w: q.w,
            v: q.v.column(0).into_owned(),
            c: q.c,
        }
    }
}

impl Form {
    fn eval(&self, x: &DVector<f64>, buf: &mut DVector<f64>) -> f64 {
        buf.gemv(1.0, &self.w, x, 0.0);
        x.dot(buf) + 2.0 * self.v.dot(x) + self.c
    }
}

/// Euler–Maruyama paths with a trapezoid running cost.
///
/// Path `i` draws its Gaussians from `ChaCha8(master_seed)` on stream `i`,
/// and per-path costs are summed in path order, so the result does not
/// depend on `workers`.
pub fn simulate_paths<S, C>(
    sys: &S,
    cost: &C,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
    workers: usize,
) -> Result<SimulationReport, EvaluationError>
where
    S: AffineSde + ?Sized,
    C: CostFunctional + ?Sized,
{
    if n_paths == 0 {
        return Err(EvaluationError::InvalidInput("n_paths must be at least 1".into()));
    }
    let dim = sys.dim();
    if dim > SIMULATION_DIM_CAP {
        return Err(EvaluationError::DimensionCap { dim, cap: SIMULATION_DIM_CAP });
    }
    let steps = grid.steps();
    let coeffs: Vec<DenseStep> = (0..steps)
        .map(|k| {
            let c = sys.coefficients(grid.stage(k, StagePoint::Start));
            DenseStep {
                a: c.drift.to_dense(),
                b: c.offset.column(0).into_owned(),
                l: c.noise.to_dense(),
            }
        })
        .collect();
    let forms: Vec<Form> = (0..=steps).map(|k| cost.running_form(grid.node_stage(k)).into()).collect();
    let terminal: Form = cost.terminal_form().into();
    let x0 = sys.initial_state().column(0).into_owned();
    let dt = grid.dt();
    let sq = dt.sqrt();

    let run = |path: usize| -> Result<PathSummary, EvaluationError> {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(path as u64);
        let mut x = x0.clone();
        let mut buf = DVector::zeros(dim);
        let mut drift = DVector::zeros(dim);
        let noise_dim = coeffs.first().map_or(0, |c| c.l.ncols());
        let mut xi = DVector::zeros(noise_dim);
        let mut running = 0.0;
        for k in 0..=steps {
            let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
            running += weight * dt * forms[k].eval(&x, &mut buf);
            if k == steps {
                break;
            }
            let c = &coeffs[k];
            drift.copy_from(&c.b);
            drift.gemv(1.0, &c.a, &x, 1.0);
            for z in xi.iter_mut() {
                *z = rng.sample(StandardNormal);
            }
            x.axpy(dt, &drift, 1.0);
            x.gemv(sq, &c.l, &xi, 1.0);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(EvaluationError::NonFinitePath { path, step: k + 1 });
            }
        }
        let cost = running + terminal.eval(&x, &mut buf);
        Ok(PathSummary { cost, terminal: x })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EvaluationError::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<Result<PathSummary, EvaluationError>> =
        pool.install(|| (0..n_paths).into_par_iter().map(run).collect());
    let paths = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let n = n_paths as f64;
    let mean = paths.iter().map(|p| p.cost).sum::<f64>() / n;
    let std_error = if n_paths > 1 {
        let var = paths.iter().map(|p| (p.cost - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(SimulationReport {
        n_paths,
        mean,
        std_error,
        paths,
    })
}
