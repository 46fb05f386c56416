use nalgebra::DMatrix;

use super::{NumericsError, Stage, StagePoint, TimeGrid};

/// Cubic Hermite value at the centre of an interval of length `h` from the
/// endpoint values and derivatives.
pub fn hermite_midpoint(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    da: &DMatrix<f64>,
    db: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    (a + b) * 0.5 + (da - db) * (h / 8.0)
}

/// One fixed-shape matrix per grid node, optionally with interval midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPath {
    grid: TimeGrid,
    nodes: Vec<DMatrix<f64>>,
    mids: Option<Vec<DMatrix<f64>>>,
}

impl MatrixPath {
    pub fn new(grid: TimeGrid, nodes: Vec<DMatrix<f64>>) -> Result<Self, NumericsError> {
        if nodes.len() != grid.node_count() {
            return Err(NumericsError::ShapeMismatch(format!(
                "path has {} values, grid has {} nodes",
                nodes.len(),
                grid.node_count()
            )));
        }
        let shape = nodes[0].shape();
        if let Some(k) = nodes.iter().position(|m| m.shape() != shape) {
            return Err(NumericsError::ShapeMismatch(format!(
                "node {k} has shape {:?}, expected {shape:?}",
                nodes[k].shape()
            )));
        }
        Ok(Self {
            grid,
            nodes,
            mids: None,
        })
    }

    pub fn constant(grid: TimeGrid, value: DMatrix<f64>) -> Self {
        let mids = vec![value.clone(); grid.steps()];
        Self {
            grid,
            nodes: vec![value; grid.node_count()],
            mids: Some(mids),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        self.nodes[0].shape()
    }

    pub fn nodes(&self) -> &[DMatrix<f64>] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &DMatrix<f64> {
        &self.nodes[k]
    }

    pub fn initial(&self) -> &DMatrix<f64> {
        &self.nodes[0]
    }

    pub fn terminal(&self) -> &DMatrix<f64> {
        self.nodes.last().expect("non-empty path")
    }

    pub fn mids(&self) -> Option<&[DMatrix<f64>]> {
        self.mids.as_deref()
    }

    /// Attaches precomputed midpoints, one per interval.
    pub fn with_mids(mut self, mids: Vec<DMatrix<f64>>) -> Result<Self, NumericsError> {
        if mids.len() != self.grid.steps() || mids.iter().any(|m| m.shape() != self.shape()) {
            return Err(NumericsError::ShapeMismatch("midpoints do not match the path".into()));
        }
        self.mids = Some(mids);
        Ok(self)
    }

    pub fn has_mids(&self) -> bool {
        self.mids.is_some()
    }

    /// Fills interval midpoints by cubic Hermite interpolation, taking the
    /// endpoint derivatives from `field` evaluated with the interval's own
    /// coefficients. Fourth-order accurate when `field` is the path's ODE.
    pub fn with_hermite_mids<F>(mut self, mut field: F) -> Self
    where
        F: FnMut(Stage, &DMatrix<f64>) -> DMatrix<f64>,
    {
        let h = self.grid.dt();
        let mids = (0..self.grid.steps())
            .map(|k| {
                let a = &self.nodes[k];
                let b = &self.nodes[k + 1];
                let da = field(self.grid.stage(k, StagePoint::Start), a);
                let db = field(self.grid.stage(k, StagePoint::End), b);
                hermite_midpoint(a, b, &da, &db, h)
            })
            .collect();
        self.mids = Some(mids);
        self
    }

    /// Value seen by an RK4 stage. Midpoints must have been filled.
    pub fn at_stage(&self, stage: Stage) -> &DMatrix<f64> {
        match stage.point {
            StagePoint::Start => &self.nodes[stage.interval],
            StagePoint::End => &self.nodes[stage.interval + 1],
            StagePoint::Mid => {
                &self.mids.as_ref().expect("path midpoints were not computed")[stage.interval]
            }
        }
    }

    /// Applies `f` to every node and midpoint.
    pub fn map(&self, mut f: impl FnMut(&DMatrix<f64>) -> DMatrix<f64>) -> MatrixPath {
        MatrixPath {
            grid: self.grid,
            nodes: self.nodes.iter().map(&mut f).collect(),
            mids: self.mids.as_ref().map(|m| m.iter().map(&mut f).collect()),
        }
    }

    /// Largest entrywise asymmetry over the nodes.
    pub fn max_asymmetry(&self) -> f64 {
        self.nodes.iter().map(super::asymmetry).fold(0.0, f64::max)
    }

    /// Supremum over nodes of the largest absolute entry of `self - other`.
    pub fn sup_diff(&self, other: &MatrixPath) -> f64 {
        self.nodes
            .iter()
            .zip(&other.nodes)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    pub fn same_grid(&self, other: &MatrixPath) -> bool {
        self.grid == other.grid
    }
}
