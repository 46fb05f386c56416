use super::{NumericsError, Stage, TimeGrid};

/// Piecewise-constant function of time: `values[j]` holds on `[starts[j], starts[j+1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    starts: Vec<f64>,
    values: Vec<T>,
}

impl<T> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Self {
            starts: vec![0.0],
            values: vec![value],
        }
    }

    /// Builds a schedule from `(t_start, value)` segments.
    ///
    /// The first segment must start at 0 and starts must increase strictly.
    pub fn from_segments(segments: Vec<(f64, T)>) -> Result<Self, NumericsError> {
        if segments.is_empty() {
            return Err(NumericsError::InvalidSchedule("no segments".into()));
        }
        let (starts, values): (Vec<f64>, Vec<T>) = segments.into_iter().unzip();
        if starts[0] != 0.0 {
            return Err(NumericsError::InvalidSchedule(format!(
                "gap: first segment starts at {} instead of 0",
                starts[0]
            )));
        }
        for w in starts.windows(2) {
            if !(w[1] > w[0]) {
                return Err(NumericsError::InvalidSchedule(format!(
                    "overlap: segment start {} does not follow {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(Self { starts, values })
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Interior breakpoints (segment starts after 0).
    pub fn breakpoints(&self) -> &[f64] {
        &self.starts[1..]
    }

    pub fn piece_index(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Right-continuous value at `t`.
    pub fn at(&self, t: f64) -> &T {
        &self.values[self.piece_index(t)]
    }

    /// Value on grid interval `k`, read at the interval midpoint.
    pub fn on_interval(&self, grid: &TimeGrid, k: usize) -> &T {
        self.at(grid.node(k) + 0.5 * grid.dt())
    }

    pub fn at_stage(&self, grid: &TimeGrid, stage: Stage) -> &T {
        self.on_interval(grid, stage.interval)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Schedule<U> {
        Schedule {
            starts: self.starts.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn try_map<U, E>(&self, f: impl FnMut(&T) -> Result<U, E>) -> Result<Schedule<U>, E> {
        Ok(Schedule {
            starts: self.starts.clone(),
            values: self.values.iter().map(f).collect::<Result<_, _>>()?,
        })
    }

    /// Pairs two schedules on the union of their breakpoints.
    pub fn zip<U: Clone>(&self, other: &Schedule<U>) -> Schedule<(T, U)>
    where
        T: Clone,
    {
        let mut starts: Vec<f64> = self.starts.iter().chain(other.starts.iter()).copied().collect();
        starts.sort_by(f64::total_cmp);
        starts.dedup();
        let values = starts
            .iter()
            .map(|&t| (self.at(t).clone(), other.at(t).clone()))
            .collect();
        Schedule { starts, values }
    }

    /// Node ranges `[first, last]` of each piece on `grid`.
    pub fn node_ranges(&self, grid: &TimeGrid) -> Result<Vec<(usize, usize)>, NumericsError> {
        grid.check_breakpoints(self.breakpoints())?;
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let a = grid.node_of(self.starts[j]).unwrap_or(0);
            let b = if j + 1 < self.len() {
                grid.node_of(self.starts[j + 1]).unwrap_or(grid.steps())
            } else {
                grid.steps()
            };
            if b > a {
                out.push((a, b));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_right_continuous() {
        let s = Schedule::from_segments(vec![(0.0, 1), (0.5, 2)]).unwrap();
        assert_eq!(*s.at(0.25), 1);
        assert_eq!(*s.at(0.5), 2);
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(*s.on_interval(&g, 1), 1);
        assert_eq!(*s.on_interval(&g, 2), 2);
    }

    #[test]
    fn gap_and_overlap_are_rejected() {
        let gap = Schedule::from_segments(vec![(0.1, 1)]).unwrap_err();
        assert!(gap.to_string().contains("gap"));
        let overlap = Schedule::from_segments(vec![(0.0, 1), (0.5, 2), (0.5, 3)]).unwrap_err();
        assert!(overlap.to_string().contains("overlap"));
    }

    #[test]
    fn zip_merges_breakpoints() {
        let a = Schedule::from_segments(vec![(0.0, 'a'), (0.5, 'b')]).unwrap();
        let b = Schedule::from_segments(vec![(0.0, 1), (0.25, 2)]).unwrap();
        let z = a.zip(&b);
        assert_eq!(z.starts(), &[0.0, 0.25, 0.5]);
        assert_eq!(z.values(), &[('a', 1), ('a', 2), ('b', 2)]);
    }

    #[test]
    fn node_ranges_cover_grid() {
        let s = Schedule::from_segments(vec![(0.0, 1), (0.5, 2)]).unwrap();
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(s.node_ranges(&g).unwrap(), vec![(0, 2), (2, 4)]);
        let coarse = TimeGrid::new(1.0, 3).unwrap();
        assert!(s.node_ranges(&coarse).is_err());
    }
}
