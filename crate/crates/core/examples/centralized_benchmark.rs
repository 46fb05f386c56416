//! Exact centralized optimum for a finite population and the stationarity
//! check of the optimal feedback along random perturbations.
//!
//! cargo run --example centralized_benchmark [N] [steps]

use std::time::Instant;

use mfsocial::centralized::{
    assemble_joint, centralized_stationarity_check, perturbation_directions, solve_centralized,
};
use mfsocial::scenario::builtin;

fn main() -> Result<(), mfsocial::Error> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let n = args.next().flatten().unwrap_or(2);
    let steps = args.next().flatten().unwrap_or(1000);
    let params = builtin::canonical();
    let grid = params.grid(steps)?;

    let start = Instant::now();
    let joint = assemble_joint(&params, n)?;
    let sol = solve_centralized(&joint, &grid)?;
    println!("N={n} dim={} J_opt={:.10} ({:.2?})", joint.dim(), sol.optimal_cost, start.elapsed());

    let dirs = perturbation_directions(&joint, 5, 0);
    let report = centralized_stationarity_check(&joint, &sol, &grid, &dirs, 1e-3)?;
    println!("direction,slope,forward_slope,second_difference");
    for (j, d) in report.directions.iter().enumerate() {
        println!("{j},{:.3e},{:.3e},{:.3e}", d.slope, d.forward_slope, d.second_difference);
    }
    println!("# stationary at 1e-6: {}", report.passes(1e-6));
    Ok(())
}
