use nalgebra::DMatrix;

use super::ScenarioError;
use crate::numerics::{Schedule, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    /// State dimension.
    pub n: usize,
    /// Control dimension.
    pub n1: usize,
    /// Noise dimension.
    pub n2: usize,
}

/// Shape class of a coefficient, resolved against [`Dims`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    State,
    Input,
    Noise,
    Control,
    Vector,
}

impl Shape {
    pub fn resolve(self, d: Dims) -> (usize, usize) {
        match self {
            Shape::State => (d.n, d.n),
            Shape::Input => (d.n, d.n1),
            Shape::Noise => (d.n, d.n2),
            Shape::Control => (d.n1, d.n1),
            Shape::Vector => (d.n, 1),
        }
    }
}

macro_rules! coefficient_set {
    ($($field:ident => $key:literal : $shape:ident),* $(,)?) => {
        /// Model coefficients frozen at one instant. Vectors are `n × 1`.
        #[derive(Clone, Debug, PartialEq)]
        pub struct Coefficients {
            $(pub $field: DMatrix<f64>,)*
        }

        /// Piecewise-constant coefficient paths on `[0, T]`.
        #[derive(Clone, Debug, PartialEq)]
        pub struct CoefficientPaths {
            $(pub $field: Schedule<DMatrix<f64>>,)*
        }

        impl CoefficientPaths {
            /// File keys paired with their shape class.
            pub const FIELDS: &'static [(&'static str, Shape)] = &[$(($key, Shape::$shape)),*];

            pub(crate) fn from_lookup(
                mut get: impl FnMut(&'static str) -> Schedule<DMatrix<f64>>,
            ) -> Self {
                Self { $($field: get($key),)* }
            }

            /// `(key, schedule)` pairs in file order.
            pub fn entries(&self) -> Vec<(&'static str, &Schedule<DMatrix<f64>>)> {
                vec![$(($key, &self.$field)),*]
            }

            pub fn at(&self, t: f64) -> Coefficients {
                Coefficients { $($field: self.$field.at(t).clone(),)* }
            }
        }
    };
}

coefficient_set! {
    a0 => "A0": State,
    b0 => "B0": Input,
    f0 => "F0": State,
    d0 => "D0": Noise,
    a => "A": State,
    b => "B": Input,
    f => "F": State,
    g => "G": State,
    d => "D": Noise,
    h0 => "H0": State,
    h1 => "H1": State,
    h2 => "H2": State,
    q0 => "Q0": State,
    q => "Q": State,
    r0 => "R0": Control,
    r => "R": Control,
    eta0 => "eta0": Vector,
    eta => "eta": Vector,
}

impl CoefficientPaths {
    /// Sorted union of interior breakpoints of all coefficients.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .entries()
            .iter()
            .flat_map(|(_, s)| s.breakpoints().iter().copied())
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// All coefficients on the merged breakpoints, one snapshot per piece.
    pub fn merged(&self) -> Schedule<Coefficients> {
        let segments = std::iter::once(0.0)
            .chain(self.breakpoints())
            .map(|t| (t, self.at(t)))
            .collect();
        Schedule::from_segments(segments).expect("merged breakpoints are increasing")
    }
}

/// Terminal cost data.
#[derive(Clone, Debug, PartialEq)]
pub struct Terminal {
    pub h0f: DMatrix<f64>,
    pub h1f: DMatrix<f64>,
    pub h2f: DMatrix<f64>,
    pub q0f: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub eta0f: DMatrix<f64>,
    pub etaf: DMatrix<f64>,
}

/// How minor initial states are produced for a population of size N.
#[derive(Clone, Debug, PartialEq)]
pub enum MinorInit {
    /// One state per minor; the population size must match the list.
    Explicit(Vec<DMatrix<f64>>),
    /// Every minor starts at the same state.
    Constant(DMatrix<f64>),
    /// Componentwise midpoint grid `low + (high - low)(i - 1/2)/N`.
    Uniform { low: DMatrix<f64>, high: DMatrix<f64> },
}

/// Constants bounding the admissible data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    /// Lower bound on the control weights, `R ⪰ c1·I`.
    pub c1: f64,
    /// Bound on the norm of minor initial states.
    pub c2: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { c1: 1e-6, c2: 1e6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub dims: Dims,
    pub horizon: f64,
    pub lambda: f64,
    pub coefficients: CoefficientPaths,
    pub terminal: Terminal,
    /// Major initial state.
    pub z0: DMatrix<f64>,
    /// Initial mean of the limiting population.
    pub m0: DMatrix<f64>,
    pub minor_init: MinorInit,
    pub limits: Limits,
}

impl ScenarioParams {
    /// Initial states of `n_minor` minor players.
    pub fn minor_initial_states(&self, n_minor: usize) -> Result<Vec<DMatrix<f64>>, ScenarioError> {
        if n_minor == 0 {
            return Err(ScenarioError::InvalidValue {
                field: "N".into(),
                reason: "population size must be at least 1".into(),
            });
        }
        match &self.minor_init {
            MinorInit::Explicit(values) => {
                if values.len() != n_minor {
                    return Err(ScenarioError::InvalidValue {
                        field: "init.minor_init.values".into(),
                        reason: format!("lists {} states but N = {n_minor}", values.len()),
                    });
                }
                Ok(values.clone())
            }
            MinorInit::Constant(v) => Ok(vec![v.clone(); n_minor]),
            MinorInit::Uniform { low, high } => Ok((1..=n_minor)
                .map(|i| low + (high - low) * ((i as f64 - 0.5) / n_minor as f64))
                .collect()),
        }
    }

    /// Checks that every coefficient breakpoint is a node of `grid` and the
    /// grid spans the horizon.
    pub fn check_grid(&self, grid: &TimeGrid) -> Result<(), ScenarioError> {
        if (grid.horizon() - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
            return Err(ScenarioError::InvalidValue {
                field: "T".into(),
                reason: format!("grid horizon {} differs from T = {}", grid.horizon(), self.horizon),
            });
        }
        grid.check_breakpoints(&self.coefficients.breakpoints())?;
        Ok(())
    }

    pub fn grid(&self, steps: usize) -> Result<TimeGrid, ScenarioError> {
        let grid = TimeGrid::new(self.horizon, steps)?;
        self.check_grid(&grid)?;
        Ok(grid)
    }

    /// Same scenario with a different social weight.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}
