//! Exact social cost of the decentralized law (moment propagation) next to
//! a seeded Monte Carlo estimate.
//!
//! cargo run --example exact_vs_monte_carlo [N] [paths]

use mfsocial::evaluation::{build_augmented, propagate_moments, simulate_paths, social_cost_exact, RealSocialCost};
use mfsocial::meanfield::solve_mean_field;
use mfsocial::scenario::builtin;

fn main() -> Result<(), mfsocial::Error> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let n = args.next().flatten().unwrap_or(4);
    let paths = args.next().flatten().unwrap_or(10_000);
    let params = builtin::canonical();
    let grid = params.grid(2000)?;
    let sol = solve_mean_field(&params, &grid)?;
    let sys = build_augmented(&sol.law, n)?;
    let cost = RealSocialCost(&sys);

    let exact = social_cost_exact(&propagate_moments(&sys, Some(&cost), &grid)?, &cost);
    let mc = simulate_paths(&sys, &cost, &grid, paths, 0, rayon::current_num_threads())?;
    println!("N={n} paths={paths}");
    println!("exact      {exact:.8}");
    println!("empirical  {:.8} +- {:.2e}", mc.mean, mc.std_error);
    println!("z-score    {:.2}", (mc.mean - exact) / mc.std_error);
    Ok(())
}
