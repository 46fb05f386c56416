use nalgebra::DMatrix;

use super::{MatrixPath, NumericsError, Stage, StagePoint, TimeGrid};

/// State types the fixed-step integrator can advance.
pub trait OdeState: Clone {
    /// `self + c * other`
    fn axpy(&self, c: f64, other: &Self) -> Self;
    fn all_finite(&self) -> bool;
}

impl OdeState for f64 {
    fn axpy(&self, c: f64, other: &Self) -> Self {
        self + c * other
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl OdeState for DMatrix<f64> {
    fn axpy(&self, c: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out += other * c;
        out
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl<A: OdeState, B: OdeState> OdeState for (A, B) {
    fn axpy(&self, c: f64, other: &Self) -> Self {
        (self.0.axpy(c, &other.0), self.1.axpy(c, &other.1))
    }
    fn all_finite(&self) -> bool {
        self.0.all_finite() && self.1.all_finite()
    }
}

impl<A: OdeState, B: OdeState, C: OdeState> OdeState for (A, B, C) {
    fn axpy(&self, c: f64, other: &Self) -> Self {
        (
            self.0.axpy(c, &other.0),
            self.1.axpy(c, &other.1),
            self.2.axpy(c, &other.2),
        )
    }
    fn all_finite(&self) -> bool {
        self.0.all_finite() && self.1.all_finite() && self.2.all_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Classic RK4 over `grid`, calling `observe(node, state)` at every node in
/// integration order and `post_step` after each step. Returns the final state.
///
/// `field(stage, y)` is the time derivative `dy/dt`. Backward integration
/// starts from `init` at `t = T` and steps with `-dt`.
pub fn integrate_observed<S, F, P, O>(
    grid: &TimeGrid,
    direction: Direction,
    init: S,
    mut field: F,
    mut post_step: P,
    mut observe: O,
) -> Result<S, NumericsError>
where
    S: OdeState,
    F: FnMut(Stage, &S) -> S,
    P: FnMut(&mut S),
    O: FnMut(usize, &S),
{
    let n = grid.steps();
    if !init.all_finite() {
        let node = if direction == Direction::Forward { 0 } else { n };
        return Err(NumericsError::Divergence { node });
    }
    let mut y = init;
    match direction {
        Direction::Forward => observe(0, &y),
        Direction::Backward => observe(n, &y),
    }
    let dt = grid.dt();
    for step in 0..n {
        let (interval, first, last, h, node) = match direction {
            Direction::Forward => (step, StagePoint::Start, StagePoint::End, dt, step + 1),
            Direction::Backward => {
                let k = n - 1 - step;
                (k, StagePoint::End, StagePoint::Start, -dt, k)
            }
        };
        let s1 = grid.stage(interval, first);
        let sm = grid.stage(interval, StagePoint::Mid);
        let s4 = grid.stage(interval, last);
        let k1 = field(s1, &y);
        let k2 = field(sm, &y.axpy(0.5 * h, &k1));
        let k3 = field(sm, &y.axpy(0.5 * h, &k2));
        let k4 = field(s4, &y.axpy(h, &k3));
        let mut next = y
            .axpy(h / 6.0, &k1)
            .axpy(h / 3.0, &k2)
            .axpy(h / 3.0, &k3)
            .axpy(h / 6.0, &k4);
        post_step(&mut next);
        if !next.all_finite() {
            return Err(NumericsError::Divergence { node });
        }
        y = next;
        observe(node, &y);
    }
    Ok(y)
}

/// RK4 returning the state at every node, indexed by node.
pub fn integrate<S, F, P>(
    grid: &TimeGrid,
    direction: Direction,
    init: S,
    field: F,
    post_step: P,
) -> Result<Vec<S>, NumericsError>
where
    S: OdeState,
    F: FnMut(Stage, &S) -> S,
    P: FnMut(&mut S),
{
    let mut out: Vec<Option<S>> = vec![None; grid.node_count()];
    integrate_observed(grid, direction, init, field, post_step, |k, y| {
        out[k] = Some(y.clone())
    })?;
    Ok(out.into_iter().map(|y| y.expect("every node visited")).collect())
}

/// Matrix ODE `dX/dt = field(stage, X)` on the grid, forward from `X(0)` or
/// backward from `X(T)`. The returned path carries Hermite midpoints.
pub fn integrate_matrix_ode<F>(
    mut field: F,
    init: DMatrix<f64>,
    grid: &TimeGrid,
    direction: Direction,
) -> Result<MatrixPath, NumericsError>
where
    F: FnMut(Stage, &DMatrix<f64>) -> DMatrix<f64>,
{
    let nodes = integrate(grid, direction, init, &mut field, |_| {})?;
    Ok(MatrixPath::new(*grid, nodes)?.with_hermite_mids(field))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn zero_field_keeps_identity() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let p = integrate_matrix_ode(
            |_, x| DMatrix::zeros(x.nrows(), x.ncols()),
            DMatrix::identity(2, 2),
            &g,
            Direction::Forward,
        )
        .unwrap();
        for k in 0..g.node_count() {
            assert_eq!(p.node(k), &DMatrix::<f64>::identity(2, 2));
        }
    }

    #[test]
    fn exponential_growth_matches_e() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let p = integrate_matrix_ode(|_, x| x.clone(), scalar(1.0), &g, Direction::Forward).unwrap();
        assert!((p.node(100)[0] - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn backward_linear_integration() {
        let g = TimeGrid::new(1.0, 7).unwrap();
        let p = integrate_matrix_ode(|_, _| scalar(-1.0), scalar(0.0), &g, Direction::Backward).unwrap();
        assert!((p.node(0)[0] - 1.0).abs() < 1e-14);
        assert_eq!(p.node(7)[0], 0.0);
    }

    #[test]
    fn rk4_error_drops_sixteenfold_when_dt_halves() {
        let err = |steps: usize| {
            let g = TimeGrid::new(1.0, steps).unwrap();
            let p = integrate_matrix_ode(|_, x| x.clone(), scalar(1.0), &g, Direction::Forward).unwrap();
            (0..=steps)
                .map(|k| (p.node(k)[0] - g.node(k).exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(10) / err(20);
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn backward_then_forward_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -0.3, 0.2]);
        let g = TimeGrid::new(1.0, 400).unwrap();
        let xt = DMatrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let back = integrate_matrix_ode(|_, x| &a * x, xt.clone(), &g, Direction::Backward).unwrap();
        let fwd =
            integrate_matrix_ode(|_, x| &a * x, back.node(0).clone(), &g, Direction::Forward).unwrap();
        assert!((fwd.node(400) - xt).amax() < 1e-10);
    }

    #[test]
    fn divergence_reports_node() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        // x' = x^2 from x(0)=10 blows up at t = 0.1
        let err = integrate_matrix_ode(|_, x| x.component_mul(x) * 1e3, scalar(10.0), &g, Direction::Forward)
            .unwrap_err();
        assert!(matches!(err, NumericsError::Divergence { .. }));
    }
}
