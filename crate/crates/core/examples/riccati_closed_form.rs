//! Backward Riccati integration against the closed form `P(t) = 1/(2 - t)`
//! of `-P' = -P^2, P(1) = 1`, showing fourth-order convergence.

use mfsocial::meanfield::{solve_riccati, RiccatiSource};
use mfsocial::numerics::{Schedule, TimeGrid};
use nalgebra::DMatrix;

fn scalar(x: f64) -> Schedule<DMatrix<f64>> {
    Schedule::constant(DMatrix::from_element(1, 1, x))
}

fn main() -> Result<(), mfsocial::Error> {
    let mut previous: Option<f64> = None;
    println!("steps,max_error,ratio");
    for steps in [10, 20, 40, 80, 160] {
        let grid = TimeGrid::new(1.0, steps)?;
        let p = solve_riccati(&grid, &scalar(0.0), &scalar(1.0), &scalar(0.0), &DMatrix::identity(1, 1), RiccatiSource::Minor)?;
        let err = (0..grid.node_count())
            .map(|k| (p.p.node(k)[0] - 1.0 / (2.0 - grid.node(k))).abs())
            .fold(0.0, f64::max);
        let ratio = previous.map(|e| format!("{:.2}", e / err)).unwrap_or_default();
        println!("{steps},{err:.3e},{ratio}");
        previous = Some(err);
    }
    Ok(())
}
