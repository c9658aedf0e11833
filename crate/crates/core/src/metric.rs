//! Symmetric metrics: recovery from dual variables, subspace assembly,
//! PSD projection, distances and binary persistence.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{check_dim, invalid, DmlError, Result};
use crate::gram::accumulate;
use crate::linalg::{asymmetry, max_abs, sorted_eigen, symmetrize};
use crate::par::Backend;
use crate::projection::ProjectionMatrix;
use crate::triplets::TripletCache;

/// Relative asymmetry tolerated by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Dense symmetric `q × q` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(invalid(format!("metric must be square, got {}×{}", m.nrows(), m.ncols())));
        }
        let worst = asymmetry(&m);
        if worst > SYMMETRY_TOL * max_abs(&m) {
            return Err(invalid(format!("matrix is not symmetric (asymmetry {worst:e})")));
        }
        Ok(Self(m))
    }

    /// Symmetrizes `(m + mᵀ)/2` instead of checking.
    pub fn symmetrized(mut m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrized needs a square matrix");
        symmetrize(&mut m);
        Self(m)
    }

    pub fn identity(q: usize) -> Self {
        Self(DMatrix::identity(q, q))
    }

    pub fn zeros(q: usize) -> Self {
        Self(DMatrix::zeros(q, q))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Eigenvalues, nonincreasing.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(sorted_eigen(&self.0)?.0)
    }

    /// Number of eigenvalues above `tol · max |eigenvalue|`.
    pub fn rank(&self, tol: f64) -> Result<usize> {
        let vals = self.eigenvalues()?;
        let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(vals.iter().filter(|v| v.abs() > tol * top).count())
    }
}

/// `M̂ = −(1/(λN)) Σ_t α_t A_t` from original-space difference vectors,
/// computed as two blocked rank-`N` products and symmetrized.
pub fn recover_metric(alpha: &[f64], cache: &TripletCache, lambda: f64) -> Result<SymMatrix> {
    recover_metric_with(alpha, cache, lambda, Backend::default())
}

pub fn recover_metric_with(alpha: &[f64], cache: &TripletCache, lambda: f64, backend: Backend) -> Result<SymMatrix> {
    check_dim(cache.len(), alpha.len())?;
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if let Some(index) = alpha.iter().position(|a| !(-1.0..=0.0).contains(a)) {
        return Err(DmlError::InfeasibleDual { index, value: alpha[index] });
    }
    let s = accumulate(cache, alpha, backend)?;
    Ok(metric_from_accumulator(&s, lambda, alpha.len()))
}

/// `−S/(λN)`, symmetrized. For SRP/SPCA this is the subspace metric `M_s`.
pub fn metric_from_accumulator(s: &DMatrix<f64>, lambda: f64, n_triplets: usize) -> SymMatrix {
    let lambda_n = lambda * n_triplets.max(1) as f64;
    SymMatrix::symmetrized(-s / lambda_n)
}

/// `R M_s Rᵀ`, the original-space metric induced by a subspace metric.
pub fn assemble_subspace_metric(subspace: &SymMatrix, r: &ProjectionMatrix) -> Result<SymMatrix> {
    check_dim(r.output_dim(), subspace.dim())?;
    let rm = r.entries() * subspace.matrix();
    Ok(SymMatrix::symmetrized(rm * r.entries().transpose()))
}

/// Frobenius-nearest PSD matrix: eigenvalues clamped at exactly 0.
pub fn psd_project(m: &SymMatrix) -> Result<SymMatrix> {
    let (vals, vecs) = sorted_eigen(m.matrix())?;
    let q = m.dim();
    let mut scaled = vecs.clone();
    for (c, &v) in vals.iter().enumerate() {
        scaled.column_mut(c).scale_mut(v.max(0.0));
    }
    let out = scaled * vecs.transpose();
    debug_assert_eq!(out.nrows(), q);
    Ok(SymMatrix::symmetrized(out))
}

/// `L` with `M = L Lᵀ` for the PSD part of `M` (columns for positive eigenvalues only).
pub fn psd_factor(m: &SymMatrix) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sorted_eigen(m.matrix())?;
    let keep = vals.iter().take_while(|&&v| v > 0.0).count();
    let mut l = vecs.columns(0, keep).into_owned();
    for c in 0..keep {
        l.column_mut(c).scale_mut(vals[c].sqrt());
    }
    Ok(l)
}

/// `(x − y)ᵀ M (x − y)`.
pub fn metric_distance(m: &SymMatrix, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(m.dim(), x.len())?;
    check_dim(m.dim(), y.len())?;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(crate::linalg::quad_form(m.matrix(), &diff))
}

/// Dense layout: `q` as little-endian u64, then `q·q` little-endian f64, row-major.
pub fn write_metric<W: Write>(m: &SymMatrix, mut out: W) -> Result<()> {
    let q = m.dim();
    out.write_all(&(q as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(q * q * 8);
    for r in 0..q {
        for c in 0..q {
            buf.extend_from_slice(&m.matrix()[(r, c)].to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_metric<R: Read>(mut input: R) -> Result<SymMatrix> {
    let q = read_u64(&mut input)? as usize;
    let mut bytes = vec![0u8; q.checked_mul(q).and_then(|x| x.checked_mul(8)).ok_or_else(|| DmlError::Format("metric size overflows".into()))?];
    input.read_exact(&mut bytes).map_err(|_| DmlError::Format(format!("truncated metric body for q = {q}")))?;
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    SymMatrix::new(DMatrix::from_row_slice(q, q, &vals))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b).map_err(|_| DmlError::Format("missing u64 header".into()))?;
    Ok(u64::from_le_bytes(b))
}

/// Truncated eigenform `M ≈ Σ_{i<r} λ_i w_i w_iᵀ`.
///
/// Layout: `q` (u64 LE), `r` (u64 LE), `r` eigenvalues (f64 LE, nonincreasing),
/// then `r` eigenvectors of `q` f64 LE each, one vector after another.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenForm {
    pub values: Vec<f64>,
    /// `q × r`.
    pub vectors: DMatrix<f64>,
}

impl EigenForm {
    /// Keeps the `rank` largest eigenpairs.
    pub fn from_metric(m: &SymMatrix, rank: usize) -> Result<Self> {
        let (vals, vecs) = sorted_eigen(m.matrix())?;
        let r = rank.min(vals.len());
        Ok(Self { values: vals[..r].to_vec(), vectors: vecs.columns(0, r).into_owned() })
    }

    pub fn to_dense(&self) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (c, &v) in self.values.iter().enumerate() {
            scaled.column_mut(c).scale_mut(v);
        }
        SymMatrix::symmetrized(scaled * self.vectors.transpose())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.vectors.nrows() as u64).to_le_bytes())?;
        out.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        for x in self.vectors.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let q = read_u64(&mut input)? as usize;
        let r = read_u64(&mut input)? as usize;
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; count * 8];
            input.read_exact(&mut bytes).map_err(|_| DmlError::Format("truncated eigenform".into()))?;
            Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let values = read_f64s(r)?;
        let vectors = DMatrix::from_vec(q, r, read_f64s(q * r)?);
        Ok(Self { values, vectors })
    }
}
