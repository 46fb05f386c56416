use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::NumericsError;

/// Default relative tolerance for semi-definiteness tests.
pub const PSD_REL_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest entry of `|M - Mᵀ|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Threshold below which an eigenvalue of `m` counts as a genuine violation.
pub fn psd_tolerance(m: &DMatrix<f64>, tol: f64) -> f64 {
    tol * (1.0 + frobenius(m))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdCheck {
    pub min_eigenvalue: f64,
    /// Eigenpair of the most negative eigenvalue when the test fails.
    pub witness: Option<(f64, DVector<f64>)>,
}

impl PsdCheck {
    pub fn is_psd(&self) -> bool {
        self.witness.is_none()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), NumericsError> {
    if !m.is_square() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let a = asymmetry(m);
    if a > SYMMETRY_TOL * (1.0 + m.amax()) {
        return Err(NumericsError::NonSymmetric { asymmetry: a });
    }
    Ok(())
}

/// Eigenvalue test `λ_min ≥ -tol·(1 + ‖m‖_F)`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> Result<PsdCheck, NumericsError> {
    check_symmetric(m)?;
    if m.nrows() == 0 {
        return Ok(PsdCheck {
            min_eigenvalue: 0.0,
            witness: None,
        });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let (idx, &min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let witness = (min < -psd_tolerance(m, tol))
        .then(|| (min, eig.eigenvectors.column(idx).into_owned()));
    Ok(PsdCheck {
        min_eigenvalue: min,
        witness,
    })
}

/// Pass/fail version of [`is_psd`] through a Cholesky factorisation of
/// `m + tol·(1 + ‖m‖_F)·I`; cubic but much cheaper than an eigensolve.
pub fn passes_shifted_cholesky(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let shift = psd_tolerance(m, tol);
    let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * shift;
    shifted.cholesky().is_some()
}

/// Symmetric square root through an eigendecomposition; eigenvalues that are
/// negative but within the PSD tolerance are clamped to zero.
pub fn sym_sqrt(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>, NumericsError> {
    check_symmetric(m)?;
    let eig = SymmetricEigen::new(symmetrize(m));
    let floor = -psd_tolerance(m, tol);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < floor {
            return Err(NumericsError::NotPsd { min_eigenvalue: *v });
        }
        *v = v.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&roots) * v.transpose())))
}

pub fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), p.shape()).copy_from(p);
        c += p.ncols();
    }
    out
}

pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts[0].ncols();
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), p.shape()).copy_from(p);
        r += p.nrows();
    }
    out
}

pub fn block_diag(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for p in parts {
        out.view_mut((r, c), p.shape()).copy_from(p);
        r += p.nrows();
        c += p.ncols();
    }
    out
}
