//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DmlError, Result};

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_SWEEPS: usize = 0; // unlimited

/// Eigenpairs of a symmetric matrix, eigenvalues sorted nonincreasing.
/// Column `i` of the returned matrix is the eigenvector of value `i`.
pub fn sorted_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    debug_assert!(m.is_square());
    let eig = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_SWEEPS)
        .ok_or(DmlError::EigenFailure)?;
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    if vectors.iter().any(|x| !x.is_finite()) {
        return Err(DmlError::EigenFailure);
    }
    Ok((values, vectors))
}

/// `(m + mᵀ) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for c in 0..n {
        for r in (c + 1)..n {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = avg;
            m[(c, r)] = avg;
        }
    }
}

/// Largest `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for c in 0..n {
        for r in (c + 1)..n {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// `xᵀ S x` for symmetric `S`, reading only the column-major storage.
#[inline]
pub fn quad_form(s: &DMatrix<f64>, x: &[f64]) -> f64 {
    let p = x.len();
    debug_assert_eq!(s.nrows(), p);
    let data = s.as_slice();
    let mut acc = 0.0;
    for (c, &xc) in x.iter().enumerate() {
        if xc == 0.0 {
            continue;
        }
        let col = &data[c * p..(c + 1) * p];
        let dot: f64 = col.iter().zip(x).map(|(a, b)| a * b).sum();
        acc += xc * dot;
    }
    acc
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Spectral norm of a symmetric PSD matrix by power iteration.
///
/// Starts from the all-ones vector plus a deterministic perturbation and stops
/// when successive Rayleigh quotients agree to `tol` relative.
pub fn power_iteration(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i as f64) * 0.618).sin());
    x /= x.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let y = m * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = x.dot(&y).abs();
        x = y / norm;
        if (next - estimate).abs() <= tol * next.max(f64::MIN_POSITIVE) {
            return next;
        }
        estimate = next;
    }
    estimate
}
