//! Optimality gap of the decentralized law against the centralized optimum
//! as the population grows, with the fitted log-log rate.
//!
//! cargo run --example convergence_study [steps]

use std::time::Instant;

use mfsocial::evaluation::convergence_study;
use mfsocial::scenario::builtin;

fn main() -> Result<(), mfsocial::Error> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let params = builtin::canonical();
    let grid = params.grid(steps)?;
    let start = Instant::now();
    let study = convergence_study(&params, &[2, 4, 8, 16, 32, 64, 128], &grid, 0)?;
    print!("{}", study.to_csv());
    match study.eps2_slope() {
        Some(s) => println!("# eps2 slope={s:.4}"),
        None => println!("# eps2 slope undefined"),
    }
    eprintln!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
