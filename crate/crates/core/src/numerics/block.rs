use std::ops::Range;

use nalgebra::DMatrix;

/// Square operator on a vector of `nblocks` equal-width blocks, stored as
/// sparse block entries plus mean couplings (`rows += M · avg(cols)`).
///
/// Mean couplings keep the cost of exchangeable populations linear in the
/// number of blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOperator {
    width: usize,
    nblocks: usize,
    entries: Vec<(usize, usize, DMatrix<f64>)>,
    means: Vec<(Range<usize>, Range<usize>, DMatrix<f64>)>,
}

impl BlockOperator {
    pub fn new(width: usize, nblocks: usize) -> Self {
        Self {
            width,
            nblocks,
            entries: Vec::new(),
            means: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.width * self.nblocks
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn nblocks(&self) -> usize {
        self.nblocks
    }

    /// Adds `m` (width × width) at block `(row, col)`.
    pub fn add_block(&mut self, row: usize, col: usize, m: DMatrix<f64>) {
        assert!(row < self.nblocks && col < self.nblocks, "block index out of range");
        assert_eq!(m.shape(), (self.width, self.width), "block shape");
        self.entries.push((row, col, m));
    }

    /// Adds a `(width·k) × (width·l)` matrix starting at block `(row, col)`,
    /// split into width × width entries; zero blocks are skipped.
    pub fn add_span(&mut self, row: usize, col: usize, m: &DMatrix<f64>) {
        let w = self.width;
        assert!(m.nrows().is_multiple_of(w) && m.ncols().is_multiple_of(w), "span shape");
        for bi in 0..m.nrows() / w {
            for bj in 0..m.ncols() / w {
                let b = m.view((bi * w, bj * w), (w, w)).into_owned();
                if b.iter().any(|&x| x != 0.0) {
                    self.add_block(row + bi, col + bj, b);
                }
            }
        }
    }

    /// Every block in `rows` receives `m · (1/|cols|) Σ_{c ∈ cols} x_c`.
    pub fn add_mean(&mut self, rows: Range<usize>, cols: Range<usize>, m: DMatrix<f64>) {
        assert!(rows.end <= self.nblocks && cols.end <= self.nblocks && !cols.is_empty());
        assert_eq!(m.shape(), (self.width, self.width), "block shape");
        self.means.push((rows, cols, m));
    }

    /// `y = self · x` for `x` of shape dim × k.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.width;
        let k = x.ncols();
        let mut y = DMatrix::zeros(self.dim(), k);
        for (r, c, m) in &self.entries {
            y.view_mut((r * w, 0), (w, k))
                .gemm(1.0, m, &x.view((c * w, 0), (w, k)), 1.0);
        }
        for (rows, cols, m) in &self.means {
            let avg = block_average(x, w, cols.clone());
            let t = m * avg;
            for r in rows.clone() {
                let mut v = y.view_mut((r * w, 0), (w, k));
                v += &t;
            }
        }
        y
    }

    /// `y = selfᵀ · x` for `x` of shape dim × k.
    pub fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.width;
        let k = x.ncols();
        let mut y = DMatrix::zeros(self.dim(), k);
        for (r, c, m) in &self.entries {
            y.view_mut((c * w, 0), (w, k))
                .gemm_tr(1.0, m, &x.view((r * w, 0), (w, k)), 1.0);
        }
        for (rows, cols, m) in &self.means {
            let sum = block_average(x, w, rows.clone()) * rows.len() as f64;
            let t = m.transpose() * sum / cols.len() as f64;
            for c in cols.clone() {
                let mut v = y.view_mut((c * w, 0), (w, k));
                v += &t;
            }
        }
        y
    }

    /// `y = x · selfᵀ` for `x` of shape k × dim. Works on contiguous column
    /// blocks, so for symmetric `x` it is the fast way to get `(self · x)ᵀ`.
    pub fn mul_right_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.width;
        let k = x.nrows();
        let mut y = DMatrix::zeros(k, self.dim());
        for (r, c, m) in &self.entries {
            if w == 1 {
                y.column_mut(*r).axpy(m[0], &x.column(*c), 1.0);
            } else {
                y.columns_mut(r * w, w)
                    .gemm(1.0, &x.columns(c * w, w), &m.transpose(), 1.0);
            }
        }
        for (rows, cols, m) in &self.means {
            let mut avg = DMatrix::zeros(k, w);
            for c in cols.clone() {
                avg += x.columns(c * w, w);
            }
            let t = avg * (m.transpose() / cols.len() as f64);
            for r in rows.clone() {
                let mut v = y.columns_mut(r * w, w);
                v += &t;
            }
        }
        y
    }

    /// `y = x · self` for `x` of shape k × dim, on contiguous column blocks.
    pub fn mul_right(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.width;
        let k = x.nrows();
        let mut y = DMatrix::zeros(k, self.dim());
        for (r, c, m) in &self.entries {
            if w == 1 {
                y.column_mut(*c).axpy(m[0], &x.column(*r), 1.0);
            } else {
                y.columns_mut(c * w, w).gemm(1.0, &x.columns(r * w, w), m, 1.0);
            }
        }
        for (rows, cols, m) in &self.means {
            let mut sum = DMatrix::zeros(k, w);
            for r in rows.clone() {
                sum += x.columns(r * w, w);
            }
            let t = sum * (m / cols.len() as f64);
            for c in cols.clone() {
                let mut v = y.columns_mut(c * w, w);
                v += &t;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let w = self.width;
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for (r, c, m) in &self.entries {
            let mut v = out.view_mut((r * w, c * w), (w, w));
            v += m;
        }
        for (rows, cols, m) in &self.means {
            let scaled = m / cols.len() as f64;
            for r in rows.clone() {
                for c in cols.clone() {
                    let mut v = out.view_mut((r * w, c * w), (w, w));
                    v += &scaled;
                }
            }
        }
        out
    }
}

fn block_average(x: &DMatrix<f64>, w: usize, blocks: Range<usize>) -> DMatrix<f64> {
    let k = x.ncols();
    let mut acc = DMatrix::zeros(w, k);
    let count = blocks.len() as f64;
    for b in blocks {
        acc += x.view((b * w, 0), (w, k));
    }
    acc / count
}

/// Independent Brownian sources, each loading a few blocks of the state.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseLoading {
    width: usize,
    nblocks: usize,
    sources: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl NoiseLoading {
    pub fn new(width: usize, nblocks: usize) -> Self {
        Self {
            width,
            nblocks,
            sources: Vec::new(),
        }
    }

    /// Registers a source entering block `b` through `L_b` for each pair.
    pub fn add_source(&mut self, loads: Vec<(usize, DMatrix<f64>)>) {
        let cols = loads.first().map(|(_, l)| l.ncols());
        for (b, l) in &loads {
            assert!(*b < self.nblocks && l.nrows() == self.width, "noise block");
            assert_eq!(Some(l.ncols()), cols, "noise width");
        }
        self.sources.push(loads);
    }

    pub fn sources(&self) -> &[Vec<(usize, DMatrix<f64>)>] {
        &self.sources
    }

    pub fn dim(&self) -> usize {
        self.width * self.nblocks
    }

    /// `out += Σ_sources L Lᵀ`.
    pub fn add_gram_to(&self, out: &mut DMatrix<f64>) {
        let w = self.width;
        for loads in &self.sources {
            for (a, la) in loads {
                for (b, lb) in loads {
                    out.view_mut((a * w, b * w), (w, w))
                        .gemm_tr(1.0, la, lb, 1.0);
                }
            }
        }
    }

    /// Dense loading, one column group per source in registration order.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let cols: usize = self.sources.iter().map(|s| s[0].1.ncols()).sum();
        let mut out = DMatrix::zeros(self.dim(), cols);
        let mut c = 0;
        for loads in &self.sources {
            let k = loads[0].1.ncols();
            for (b, l) in loads {
                out.view_mut((b * self.width, c), (self.width, k)).copy_from(l);
            }
            c += k;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_operator(vals: &[f64]) -> BlockOperator {
        let m = |i: usize| DMatrix::from_row_slice(2, 2, &vals[4 * i..4 * i + 4]);
        let mut op = BlockOperator::new(2, 5);
        op.add_block(0, 0, m(0));
        op.add_block(3, 1, m(1));
        op.add_block(3, 1, m(2));
        op.add_mean(1..4, 2..5, m(3));
        op.add_mean(0..1, 1..5, m(4));
        op
    }

    proptest! {
        #[test]
        fn structured_matches_dense(
            vals in proptest::collection::vec(-1.0f64..1.0, 20),
            x in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            let op = sample_operator(&vals);
            let x = DMatrix::from_column_slice(10, 3, &x);
            let d = op.to_dense();
            prop_assert!((op.apply(&x) - &d * &x).amax() < 1e-13);
            prop_assert!((op.apply_transpose(&x) - d.transpose() * &x).amax() < 1e-13);
            let xt = x.transpose();
            prop_assert!((op.mul_right_transpose(&xt) - &xt * d.transpose()).amax() < 1e-13);
            prop_assert!((op.mul_right(&xt) - &xt * &d).amax() < 1e-13);
        }

        #[test]
        fn scalar_blocks_match_dense(
            vals in proptest::collection::vec(-1.0f64..1.0, 4),
            x in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let s = |v: f64| DMatrix::from_element(1, 1, v);
            let mut op = BlockOperator::new(1, 4);
            op.add_block(0, 0, s(vals[0]));
            op.add_block(2, 3, s(vals[1]));
            op.add_mean(1..4, 1..4, s(vals[2]));
            op.add_span(0, 1, &DMatrix::from_element(1, 2, vals[3]));
            let x = DMatrix::from_column_slice(3, 4, &x);
            prop_assert!((op.mul_right_transpose(&x) - &x * op.to_dense().transpose()).amax() < 1e-13);
            prop_assert!((op.mul_right(&x) - &x * op.to_dense()).amax() < 1e-13);
        }
    }

    #[test]
    fn noise_gram_matches_dense() {
        let mut nl = NoiseLoading::new(1, 4);
        nl.add_source(vec![(0, DMatrix::from_element(1, 1, 0.3)), (2, DMatrix::from_element(1, 1, 0.3))]);
        nl.add_source(vec![(1, DMatrix::from_element(1, 1, 0.2)), (3, DMatrix::from_element(1, 1, 0.2))]);
        let d = nl.to_dense();
        let mut g = DMatrix::zeros(4, 4);
        nl.add_gram_to(&mut g);
        assert!((g - &d * d.transpose()).amax() < 1e-15);
    }
}
