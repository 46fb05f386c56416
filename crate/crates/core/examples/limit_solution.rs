//! Solve the limit problem and print the decentralized gains at a few
//! times, plus the fixed-point and gain-identity residuals.
//!
//! cargo run --example limit_solution [steps]

use mfsocial::meanfield::{consistency_residual, solve_mean_field};
use mfsocial::scenario::builtin;

fn main() -> Result<(), mfsocial::Error> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let params = builtin::canonical();
    let grid = params.grid(steps)?;
    let sol = solve_mean_field(&params, &grid)?;

    println!("t,P00,P01,P11,P_lambda,phi0,phi1");
    for k in (0..=steps).step_by(steps / 10) {
        let p = sol.riccati.p.node(k);
        let phi = sol.offset.phi.node(k);
        println!(
            "{:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            grid.node(k),
            p[(0, 0)],
            p[(0, 1)],
            p[(1, 1)],
            sol.minor.p_lambda.p.node(k)[0],
            phi[0],
            phi[1]
        );
    }
    let fixed = consistency_residual(&sol.law, 0.0)?;
    let (gm, gv) = sol.law.gain_identity_residual();
    println!("# consistency residual {:.3e}", fixed.residual);
    println!("# gain identity residuals {gm:.3e} {gv:.3e}");
    println!("# offset matching residual {:.3e}", sol.matching_residual()?.max());
    Ok(())
}
