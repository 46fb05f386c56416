//! Command-line front end: `solve`, `evaluate`, `simulate`, `converge`, `check`.
//!
//! Exit codes: 0 on success, 1 when a solver fails or a check fails, 2 on
//! usage or configuration errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::centralized::{
    assemble_joint, centralized_stationarity_check, optimal_cost, perturbation_directions,
    solve_centralized,
};
use crate::evaluation::{
    build_augmented, evaluate_population, convergence_study, propagate_moments,
    simulate_paths, social_cost_exact, stream_moments, RealSocialCost, CSV_HEADER,
};
use crate::meanfield::{consistency_residual, solution_csv, solve_mean_field, MeanFieldSolution};
use crate::numerics::TimeGrid;
use crate::scenario::{
    assemble_aggregate, builtin, check_q0_psd, derive_coefficients, load_scenario, validate,
    MinorInit, ScenarioParams,
};

const DEFAULT_N_LIST: &[usize] = &[2, 4, 8, 16, 32, 64, 128];
const TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "mfsocial", version, about = "Mean-field social optimization: limit solve, centralized benchmark, optimality gap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the limit problem and write the solution paths.
    Solve(Common),
    /// Exact decentralized and centralized costs for one population size.
    Evaluate(PopulationArgs),
    /// Monte Carlo estimate of the decentralized social cost.
    Simulate(PopulationArgs),
    /// Optimality gap over a list of population sizes.
    Converge(PopulationArgs),
    /// Run the invariant suite and print PASS/FAIL per item.
    Check(PopulationArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file, or a built-in name (canonical, decoupled).
    #[arg(long, default_value = "canonical")]
    scenario: String,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct PopulationArgs {
    #[command(flatten)]
    common: Common,
    /// Population size, or a comma-separated list.
    #[arg(long = "N", value_delimiter = ',')]
    n: Vec<usize>,
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
}

/// Validated settings shared by every subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub steps: usize,
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub paths: usize,
    pub out: PathBuf,
}

enum Failure {
    Usage(String),
    Stage { stage: &'static str, message: String },
    Checks(usize),
}

impl Failure {
    fn stage(stage: &'static str) -> impl FnOnce(crate::Error) -> Self {
        move |e| Failure::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

fn solver<E: Into<crate::Error>>(stage: &'static str) -> impl FnOnce(E) -> Failure {
    move |e| Failure::stage(stage)(e.into())
}

fn config(common: &Common, n: &[usize], paths: usize, default_n: &[usize]) -> Result<RunConfig, Failure> {
    if common.steps < 10 {
        return Err(Failure::Usage(format!("--steps must be at least 10, got {}", common.steps)));
    }
    let n_list = if n.is_empty() { default_n.to_vec() } else { n.to_vec() };
    if n_list.contains(&0) {
        return Err(Failure::Usage("--N values must be positive".into()));
    }
    if paths == 0 {
        return Err(Failure::Usage("--paths must be positive".into()));
    }
    Ok(RunConfig {
        scenario: common.scenario.clone(),
        steps: common.steps,
        n_list,
        seed: common.seed,
        paths,
        out: common.out.clone(),
    })
}

/// Resolves `--scenario`: an existing file wins, then the built-in names.
fn load(cfg: &RunConfig) -> Result<(ScenarioParams, TimeGrid), Failure> {
    let path = Path::new(&cfg.scenario);
    let params = if path.exists() {
        load_scenario(path).map_err(|e| Failure::Usage(e.to_string()))?
    } else if let Some(text) = builtin::by_name(&cfg.scenario) {
        crate::scenario::parse_scenario(text).map_err(|e| Failure::Usage(e.to_string()))?
    } else {
        return Err(Failure::Usage(format!(
            "scenario file {} does not exist and is not a built-in name",
            path.display()
        )));
    };
    let report = validate(&params);
    if !report.is_empty() {
        return Err(Failure::Usage(format!("scenario {} is invalid:\n{report}", cfg.scenario)));
    }
    let grid = params.grid(cfg.steps).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((params, grid))
}

fn write(cfg: &RunConfig, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    let io = |e: std::io::Error| Failure::Stage {
        stage: "output",
        message: format!("{}: {e}", cfg.out.display()),
    };
    fs::create_dir_all(&cfg.out).map_err(io)?;
    let path = cfg.out.join(name);
    fs::write(&path, contents).map_err(io)?;
    Ok(path)
}

fn limit_solve(params: &ScenarioParams, grid: &TimeGrid) -> Result<MeanFieldSolution, Failure> {
    solve_mean_field(params, grid).map_err(solver("limit solve"))
}

fn cmd_solve(cfg: &RunConfig) -> Result<(), Failure> {
    let (params, grid) = load(cfg)?;
    let sol = limit_solve(&params, &grid)?;
    let report = consistency_residual(&sol.law, 0.0).map_err(solver("consistency"))?;
    let path = write(cfg, "solution.csv", &solution_csv(&sol.law))?;
    let text = format!("consistency_residual={:.16e}\n", report.residual);
    write(cfg, "consistency.txt", &text)?;
    print!("{text}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<(), Failure> {
    let (params, grid) = load(cfg)?;
    let sol = limit_solve(&params, &grid)?;
    let mut csv = format!("{CSV_HEADER}\n");
    for &n in &cfg.n_list {
        let r = evaluate_population(&sol, n, cfg.seed).map_err(solver("evaluation"))?;
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write(cfg, "evaluate.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let (params, grid) = load(cfg)?;
    let sol = limit_solve(&params, &grid)?;
    let workers = rayon::current_num_threads();
    let mut csv = String::from("N,paths,seed,dt,J_exact,J_mc,std_error\n");
    for &n in &cfg.n_list {
        let sys = build_augmented(&sol.law, n).map_err(solver("evaluation"))?;
        let cost = RealSocialCost(&sys);
        let exact = propagate_moments(&sys, Some(&cost), &grid)
            .map(|m| social_cost_exact(&m, &cost))
            .map_err(solver("moments"))?;
        let mc = simulate_paths(&sys, &cost, &grid, cfg.paths, cfg.seed, workers).map_err(solver("simulation"))?;
        writeln!(
            csv,
            "{n},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            cfg.paths,
            cfg.seed,
            grid.dt(),
            exact,
            mc.mean,
            mc.std_error
        )
        .expect("string write");
    }
    write(cfg, "simulate.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_converge(cfg: &RunConfig) -> Result<(), Failure> {
    let (params, grid) = load(cfg)?;
    let study = convergence_study(&params, &cfg.n_list, &grid, cfg.seed).map_err(solver("convergence study"))?;
    let csv = study.to_csv();
    write(cfg, "convergence.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

struct CheckLine {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn item(name: &'static str, pass: bool, detail: String) -> CheckLine {
    CheckLine { name, pass, detail }
}

/// Every invariant the solvers promise, evaluated on one scenario.
fn check_suite(params: &ScenarioParams, grid: &TimeGrid, cfg: &RunConfig) -> Result<Vec<CheckLine>, Failure> {
    let mut out = Vec::new();
    let n_eval = cfg.n_list[0];

    let derived = derive_coefficients(params);
    let agg = assemble_aggregate(params, &derived).map_err(solver("aggregate assembly"))?;
    let cert = check_q0_psd(params, &agg).map_err(solver("PSD certificate"))?;
    out.push(item(
        "aggregate cost weight PSD",
        cert.all_certified(),
        format!("reconstruction residual {:.3e}", cert.max_residual()),
    ));

    let sol = limit_solve(params, grid)?;
    out.push(item(
        "limit Riccati paths PSD",
        sol.riccati.is_psd() && sol.minor.p_lambda.is_psd(),
        format!(
            "min eigenvalues {:.3e}, {:.3e}",
            sol.riccati.min_eigenvalue(),
            sol.minor.p_lambda.min_eigenvalue()
        ),
    ));
    let fixed = consistency_residual(&sol.law, 0.0).map_err(solver("consistency"))?;
    out.push(item("consistency fixed point", fixed.residual <= TOL, format!("residual {:.3e}", fixed.residual)));
    let shifted = consistency_residual(&sol.law, 0.1).map_err(solver("consistency"))?;
    out.push(item(
        "consistency detects a shifted mean-field control",
        shifted.residual >= 1e-3,
        format!("residual {:.3e}", shifted.residual),
    ));
    let (gm, gv) = sol.law.gain_identity_residual();
    out.push(item("minor gain identity", gm <= TOL && gv <= TOL, format!("matrix {gm:.3e}, vector {gv:.3e}")));
    let matching = sol.matching_residual().map_err(solver("matching residual"))?;
    out.push(item(
        "minor offset solves its ODE",
        matching.max() <= TOL,
        format!("residual {:.3e}", matching.max()),
    ));
    let zeta = sol.minor.zeta_identity_residual(params);
    out.push(item("noise integrand identity", zeta == 0.0, format!("residual {zeta:e}")));

    let report = evaluate_population(&sol, n_eval, cfg.seed).map_err(solver("evaluation"))?;
    out.push(item(
        "optimality gap nonnegative",
        report.gap_is_nonnegative(),
        format!("N={n_eval} gap={:.3e} J_dec={:.6} J_opt={:.6}", report.gap, report.j_dec, report.j_opt),
    ));
    let again = evaluate_population(&sol, n_eval, cfg.seed).map_err(solver("evaluation"))?;
    out.push(item("evaluation is deterministic", again == report, format!("N={n_eval}")));

    let joint = assemble_joint(params, 2).map_err(solver("centralized assembly"))?;
    let csol = solve_centralized(&joint, grid).map_err(solver("centralized solve"))?;
    out.push(item(
        "centralized Riccati PSD",
        csol.pi.is_psd(),
        format!("min eigenvalue {:.3e}", csol.pi.min_eigenvalue()),
    ));
    let dirs = perturbation_directions(&joint, 10, cfg.seed);
    let st = centralized_stationarity_check(&joint, &csol, grid, &dirs, 1e-3).map_err(solver("stationarity"))?;
    out.push(item(
        "centralized stationarity",
        st.passes(1e-6),
        format!("max |slope| {:.3e}, min second difference {:.3e}", st.max_abs_slope(), st.min_second_difference()),
    ));

    let mut permuted = params.clone();
    let base: Vec<DMatrix<f64>> = params.minor_initial_states(3).map_err(solver("scenario"))?;
    let mut forward = params.clone();
    let spread: Vec<DMatrix<f64>> = base
        .iter()
        .enumerate()
        .map(|(i, x)| x.add_scalar(0.1 * i as f64))
        .collect();
    forward.minor_init = MinorInit::Explicit(spread.clone());
    permuted.minor_init = MinorInit::Explicit(vec![spread[2].clone(), spread[0].clone(), spread[1].clone()]);
    let ca = optimal_cost(&assemble_joint(&forward, 3).map_err(solver("centralized assembly"))?, grid)
        .map_err(solver("centralized solve"))?;
    let cb = optimal_cost(&assemble_joint(&permuted, 3).map_err(solver("centralized assembly"))?, grid)
        .map_err(solver("centralized solve"))?;
    out.push(item(
        "centralized cost is exchangeable",
        (ca - cb).abs() <= 1e-12 * (1.0 + ca.abs()),
        format!("difference {:.3e}", (ca - cb).abs()),
    ));

    let sys = build_augmented(&sol.law, 2).map_err(solver("evaluation"))?;
    let summary = stream_moments(&sys, None, grid, |_| {}).map_err(solver("moments"))?;
    out.push(item(
        "state covariance PSD",
        summary.psd_checked_nodes == grid.node_count(),
        format!("N=2 {} of {} nodes checked", summary.psd_checked_nodes, grid.node_count()),
    ));
    let cost = RealSocialCost(&sys);
    let exact = propagate_moments(&sys, Some(&cost), grid).map_err(solver("moments"))?;
    let j_exact = social_cost_exact(&exact, &cost);
    let mc = simulate_paths(&sys, &cost, grid, cfg.paths, cfg.seed, rayon::current_num_threads())
        .map_err(solver("simulation"))?;
    let z = (j_exact - mc.mean).abs() / mc.std_error.max(f64::MIN_POSITIVE);
    out.push(item(
        "exact cost within 3 standard errors of Monte Carlo",
        z <= 3.0 || (j_exact - mc.mean).abs() <= TOL * (1.0 + j_exact.abs()),
        format!("N=2 paths={} exact {:.6} mc {:.6} se {:.2e}", cfg.paths, j_exact, mc.mean, mc.std_error),
    ));
    Ok(out)
}

fn cmd_check(cfg: &RunConfig) -> Result<(), Failure> {
    let (params, grid) = load(cfg)?;
    let lines = check_suite(&params, &grid, cfg)?;
    let mut text = String::new();
    let mut failed = 0;
    for l in &lines {
        if !l.pass {
            failed += 1;
        }
        writeln!(text, "{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail).expect("string write");
    }
    write(cfg, "check.txt", &text)?;
    print!("{text}");
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(c) => config(c, &[], 1, &[1]).and_then(|cfg| cmd_solve(&cfg)),
        Command::Evaluate(a) => config(&a.common, &a.n, a.paths, &[8]).and_then(|cfg| cmd_evaluate(&cfg)),
        Command::Simulate(a) => config(&a.common, &a.n, a.paths, &[4]).and_then(|cfg| cmd_simulate(&cfg)),
        Command::Converge(a) => config(&a.common, &a.n, a.paths, DEFAULT_N_LIST).and_then(|cfg| {
            if cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Failure::Usage("--N list must be strictly ascending".into()));
            }
            cmd_converge(&cfg)
        }),
        Command::Check(a) => {
            let paths = if a.paths == 10_000 { 2000 } else { a.paths };
            config(&a.common, &a.n, paths, &[4]).and_then(|cfg| cmd_check(&cfg))
        }
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error [config]: {msg}");
            2
        }
        Err(Failure::Stage { stage, message }) => {
            eprintln!("error [{stage}]: {message}");
            1
        }
        Err(Failure::Checks(n)) => {
            eprintln!("error [check]: {n} item(s) failed");
            1
        }
    }
}
