//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Everything is direct (LU / symmetric eigendecomposition); matrices are a
//! few thousand square at most.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Solves `a x = b` by dense LU.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone().lu().solve(b).ok_or_else(|| {
        Error::SingularSystem(format!("{}x{} LU solve failed", a.nrows(), a.ncols()))
    })
}

/// Dense inverse by LU.
pub fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone().try_inverse().ok_or_else(|| {
        Error::SingularSystem(format!("{}x{} matrix not invertible", a.nrows(), a.ncols()))
    })
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
///
/// The input is symmetrized as `(m + mᵀ)/2` first, so callers may pass
/// matrices that are symmetric only up to roundoff.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Max-norm of `a - b`.
pub fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Least-squares slope of `ln y` against `ln x`, for asymptotic-order
/// checks. Points with non-positive coordinates are skipped.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mean_x: f64 = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y: f64 = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    cov / var
}
