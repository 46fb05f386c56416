use super::NumericsError;

/// Uniform time grid `t_k = k * dt` on `[0, horizon]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

/// Position of an RK4 evaluation inside one grid interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StagePoint {
    Start,
    Mid,
    End,
}

/// An evaluation point: the interval `[t_k, t_{k+1}]` plus the position in it.
///
/// Piecewise-constant coefficients are always read from the interval, so a
/// node shared by two intervals with different coefficients stays
/// unambiguous.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage {
    pub interval: usize,
    pub point: StagePoint,
    pub t: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self, NumericsError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(NumericsError::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(NumericsError::InvalidGrid("steps must be positive".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node_count(&self) -> usize {
        self.steps + 1
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Node index of time `t` when `t` lies on the grid (relative tolerance 1e-9 of dt).
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let k = x.round();
        if k < 0.0 || k > self.steps as f64 {
            return None;
        }
        if (x - k).abs() <= 1e-9 {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn stage(&self, interval: usize, point: StagePoint) -> Stage {
        let t = match point {
            StagePoint::Start => self.node(interval),
            StagePoint::Mid => self.node(interval) + 0.5 * self.dt(),
            StagePoint::End => self.node(interval + 1),
        };
        Stage { interval, point, t }
    }

    /// Stage used to read node `k` under the left-limit convention
    /// (node 0 reads its right neighbour interval).
    pub fn node_stage(&self, k: usize) -> Stage {
        if k == 0 {
            self.stage(0, StagePoint::Start)
        } else {
            self.stage(k - 1, StagePoint::End)
        }
    }

    /// Grid with `factor` times as many steps over the same horizon.
    pub fn refine(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            steps: self.steps * factor.max(1),
        }
    }

    /// Errors unless every time in `breakpoints` coincides with a node.
    pub fn check_breakpoints(&self, breakpoints: &[f64]) -> Result<(), NumericsError> {
        for &t in breakpoints {
            if self.node_of(t).is_none() {
                return Err(NumericsError::OffGridBreakpoint { t, steps: self.steps });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(3), 1.0);
        assert_eq!(g.node_count(), 4);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn breakpoints_must_snap_to_nodes() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(g.check_breakpoints(&[0.0, 0.25, 0.5]).is_ok());
        assert!(g.check_breakpoints(&[0.3]).is_err());
        assert_eq!(g.node_of(0.75), Some(3));
    }

    #[test]
    fn node_stage_uses_left_limit() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.node_stage(0).interval, 0);
        assert_eq!(g.node_stage(2).interval, 1);
        assert_eq!(g.node_stage(2).point, StagePoint::End);
        assert_eq!(g.node_stage(4).t, 1.0);
    }
}
