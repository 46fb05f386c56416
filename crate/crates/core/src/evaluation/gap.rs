use std::fmt::Write as _;

use rayon::prelude::*;

use super::augmented::{build_augmented, RealSocialCost};
use super::metrics::{ErrorMetrics, MetricsTracker};
use super::moments::stream_moments;
use super::EvaluationError;
use crate::centralized::{assemble_joint, optimal_cost};
use crate::meanfield::{solve_mean_field, DecentralizedLaw, MeanFieldSolution};
use crate::numerics::TimeGrid;
use crate::scenario::ScenarioParams;

/// Social costs of the decentralized law and of the centralized optimum for
/// one population size.
#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub n_minor: usize,
    pub j_dec: f64,
    pub j_opt: f64,
    pub gap: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
}

impl CostReport {
    /// Gap tolerance `1e-8 (1 + |J_opt|)` used for sign and exactness checks.
    pub fn tolerance(&self) -> f64 {
        1e-8 * (1.0 + self.j_opt.abs())
    }

    pub fn gap_is_nonnegative(&self) -> bool {
        self.gap >= -self.tolerance()
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.n_minor, self.j_dec, self.j_opt, self.gap, self.eps1, self.eps2, self.dt, self.seed
        )
    }
}

pub const CSV_HEADER: &str = "N,J_dec,J_opt,gap,eps1,eps2,dt,seed";

/// Exact social cost of the decentralized law for `n_minor` players plus the
/// approximation-error metrics, from one moment propagation.
pub fn decentralized_cost(law: &DecentralizedLaw, n_minor: usize) -> Result<(f64, ErrorMetrics), EvaluationError> {
    let sys = build_augmented(law, n_minor)?;
    let cost = RealSocialCost(&sys);
    let mut tracker = MetricsTracker::new(&sys);
    let summary = stream_moments(&sys, Some(&cost), law.grid(), |m| tracker.observe(m.node, m.mean, m.cov))?;
    let terminal = crate::evaluation::cost::CostFunctional::terminal_expected(
        &cost,
        &summary.terminal_mean,
        &summary.terminal_cov,
    );
    Ok((summary.running_cost + terminal, tracker.current))
}

/// Gap for one population size, reusing an existing limit solve.
pub fn evaluate_population(
    sol: &MeanFieldSolution,
    n_minor: usize,
    seed: u64,
) -> Result<CostReport, EvaluationError> {
    let law = &sol.law;
    let grid = *law.grid();
    let joint = assemble_joint(law.params(), n_minor)?;
    let (j_dec, metrics) = decentralized_cost(law, n_minor)?;
    let j_opt = optimal_cost(&joint, &grid)?;
    Ok(CostReport {
        n_minor,
        j_dec,
        j_opt,
        gap: j_dec - j_opt,
        eps1: metrics.eps1,
        eps2: metrics.eps2,
        dt: grid.dt(),
        steps: grid.steps(),
        seed,
    })
}

/// Full pipeline: limit solve, decentralized cost, centralized optimum.
pub fn optimality_gap(
    params: &ScenarioParams,
    n_minor: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<CostReport, EvaluationError> {
    let sol = solve_mean_field(params, grid)?;
    evaluate_population(&sol, n_minor, seed)
}

/// Least-squares slope of `log y` against `log x`; `None` unless every value
/// is positive and at least two points are given.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub reports: Vec<CostReport>,
    /// Fitted exponent of the gap; `None` when some gap is within numerical
    /// noise of zero.
    pub slope: Option<f64>,
}

impl ConvergenceStudy {
    pub fn eps2_slope(&self) -> Option<f64> {
        let xs: Vec<f64> = self.reports.iter().map(|r| r.n_minor as f64).collect();
        let ys: Vec<f64> = self.reports.iter().map(|r| r.eps2).collect();
        loglog_slope(&xs, &ys)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        match self.slope {
            Some(s) => writeln!(out, "# slope={s:.16e}").expect("string write"),
            None => out.push_str("# slope=undefined\n"),
        }
        out
    }
}

/// Gap table over ascending population sizes with the fitted rate.
pub fn convergence_study(
    params: &ScenarioParams,
    n_list: &[usize],
    grid: &TimeGrid,
    seed: u64,
) -> Result<ConvergenceStudy, EvaluationError> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(EvaluationError::InvalidInput(
            "population sizes must be positive and strictly ascending".into(),
        ));
    }
    let sol = solve_mean_field(params, grid)?;
    let reports = n_list
        .par_iter()
        .map(|&n| evaluate_population(&sol, n, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let resolved = reports.iter().all(|r| r.gap > r.tolerance());
    let slope = if resolved {
        let xs: Vec<f64> = reports.iter().map(|r| r.n_minor as f64).collect();
        let ys: Vec<f64> = reports.iter().map(|r| r.gap).collect();
        loglog_slope(&xs, &ys)
    } else {
        None
    };
    Ok(ConvergenceStudy { reports, slope })
}
