//! Labeled datasets, LIBSVM ingestion, PCA and eigen-spectra.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, DmlError, Result};
use crate::linalg::sorted_eigen;

/// Column-major collection of `n` points in `d` dimensions with class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    points: DMatrix<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    /// `points` is `d × n`; `labels` has one class id per column.
    pub fn new(points: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != points.ncols() {
            return Err(DmlError::DimensionMismatch {
                expected: points.ncols(),
                got: labels.len(),
            });
        }
        if let Some(pos) = points.iter().position(|x| !x.is_finite()) {
            let d = points.nrows().max(1);
            return Err(invalid(format!(
                "non-finite entry at dimension {} of point {}",
                pos % d,
                pos / d
            )));
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points.as_slice()[i * d..(i + 1) * d]
    }

    /// One past the largest class id.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn distinct_labels(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    /// Member indices for each class id, in increasing index order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// Dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.dim();
        let points = DMatrix::from_fn(d, indices.len(), |r, c| self.points[(r, indices[c])]);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self { points, labels }
    }
}

/// Map from contiguous class ids back to the labels found in a file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelMap {
    original: Vec<i64>,
}

impl LabelMap {
    pub fn from_original(original: Vec<i64>) -> Self {
        Self { original }
    }

    pub fn original(&self, id: usize) -> Option<i64> {
        self.original.get(id).copied()
    }

    pub fn id_of(&self, label: i64) -> Option<usize> {
        self.original.iter().position(|&l| l == label)
    }

    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct LibsvmOptions<'a> {
    /// Fixed dimension; indices above it are an error.
    pub dim: Option<usize>,
    /// Existing label mapping (e.g. from the training file). Labels it does
    /// not know are appended in sorted order.
    pub labels: Option<&'a LabelMap>,
}

pub fn parse_libsvm(text: &str) -> Result<(LabeledDataset, LabelMap)> {
    parse_libsvm_with(text, &LibsvmOptions::default())
}

pub fn parse_libsvm_with(text: &str, opts: &LibsvmOptions<'_>) -> Result<(LabeledDataset, LabelMap)> {
    let mut rows: Vec<(i64, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| DmlError::Parse { line: line_no, msg };
        let mut tokens = line.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or_default())
            .ok_or_else(|| err(format!("bad label in {line:?}")))?;
        let mut feats = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected <index>:<value>, found {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx <= last {
                return Err(err(format!("index {idx} does not increase (previous {last})")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite value at index {idx}")));
            }
            if let Some(d) = opts.dim {
                if idx > d {
                    return Err(err(format!("index {idx} exceeds dimension {d}")));
                }
            }
            last = idx;
            feats.push((idx, val));
        }
        max_index = max_index.max(last);
        rows.push((label, feats));
    }

    if rows.is_empty() {
        return Err(DmlError::Empty("LIBSVM input has no data lines"));
    }

    let mut map = opts.labels.cloned().unwrap_or_default();
    let unseen: BTreeSet<i64> = rows
        .iter()
        .map(|(l, _)| *l)
        .filter(|l| map.id_of(*l).is_none())
        .collect();
    map.original.extend(unseen);

    let d = opts.dim.unwrap_or(max_index);
    let n = rows.len();
    let mut points = DMatrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    for (c, (label, feats)) in rows.into_iter().enumerate() {
        for (idx, val) in feats {
            points[(idx - 1, c)] = val;
        }
        labels.push(map.id_of(label).expect("label registered above"));
    }
    Ok((LabeledDataset::new(points, labels)?, map))
}

fn parse_label(tok: &str) -> Option<i64> {
    let tok = tok.strip_prefix('+').unwrap_or(tok);
    if let Ok(v) = tok.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = tok.parse().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

pub fn read_libsvm(path: &Path, opts: &LibsvmOptions<'_>) -> Result<(LabeledDataset, LabelMap)> {
    let text = std::fs::read_to_string(path)?;
    parse_libsvm_with(&text, opts)
}

/// Writes nonzero entries only, with the original labels from `map`.
pub fn write_libsvm<W: Write>(data: &LabeledDataset, map: &LabelMap, mut out: W) -> Result<()> {
    for c in 0..data.len() {
        let id = data.labels()[c];
        let label = map
            .original(id)
            .ok_or_else(|| invalid(format!("class id {id} missing from label map")))?;
        write!(out, "{label}")?;
        for (r, &v) in data.point(c).iter().enumerate() {
            if v != 0.0 {
                write!(out, " {}:{v}", r + 1)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Top principal directions of a dataset.
#[derive(Clone, Debug)]
pub struct PcaBasis {
    /// `d × k`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Covariance eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// Coordinates `basisᵀ (x - mean)` for every column of `points`.
    pub fn transform(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        crate::error::check_dim(self.basis.nrows(), points.nrows())?;
        let mut centered = points.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        Ok(self.basis.tr_mul(&centered))
    }
}

fn centered(data: &LabeledDataset) -> (DMatrix<f64>, DVector<f64>) {
    let x = data.points();
    let n = x.ncols().max(1) as f64;
    let mean = x.column_sum() / n;
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        col -= &mean;
    }
    (xc, mean)
}

/// Relative threshold below which a Gram eigenvalue counts as zero.
const RANK_TOL: f64 = 1e-12;

/// Fits the top-`k` eigenvectors of the centered covariance `(1/n) Σ (x-μ)(x-μ)ᵀ`.
///
/// Works on the `d × d` covariance when `d ≤ n` and on the `n × n` Gram
/// otherwise. Missing directions (rank below `k`) are filled with an
/// orthonormal completion carrying eigenvalue 0. Each column is signed so
/// that its largest-magnitude entry is positive.
pub fn pca_fit(data: &LabeledDataset, k: usize) -> Result<PcaBasis> {
    let (d, n) = (data.dim(), data.len());
    if k == 0 || k > d.min(n) {
        return Err(invalid(format!("PCA rank k = {k} must lie in 1..={}", d.min(n))));
    }
    let (xc, mean) = centered(data);
    let nf = n as f64;

    let (mut basis, eigenvalues) = if d <= n {
        let cov = (&xc * xc.transpose()) / nf;
        let (vals, vecs) = sorted_eigen(&cov)?;
        let basis = vecs.columns(0, k).into_owned();
        (basis, vals[..k].iter().map(|&v| v.max(0.0)).collect::<Vec<_>>())
    } else {
        let gram = xc.tr_mul(&xc) / nf;
        let (vals, vecs) = sorted_eigen(&gram)?;
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        let mut basis = DMatrix::zeros(d, k);
        let mut eig = Vec::with_capacity(k);
        let mut filled = 0;
        for (i, &mu) in vals.iter().take(k).enumerate() {
            if mu <= RANK_TOL * top || mu <= 0.0 {
                break;
            }
            let mut col = &xc * vecs.column(i);
            col /= (nf * mu).sqrt();
            basis.set_column(i, &col);
            eig.push(mu);
            filled += 1;
        }
        complete_orthonormal(&mut basis, filled);
        eig.resize(k, 0.0);
        (basis, eig)
    };

    fix_signs(&mut basis);
    Ok(PcaBasis { basis, mean, eigenvalues })
}

/// Fills columns `filled..` with unit vectors orthogonal to all previous ones
/// (modified Gram-Schmidt over the standard basis, two passes).
fn complete_orthonormal(basis: &mut DMatrix<f64>, filled: usize) {
    let (d, k) = basis.shape();
    let mut col = filled;
    let mut candidate = 0;
    while col < k && candidate < d {
        let mut v = DVector::zeros(d);
        v[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for j in 0..col {
                let proj = basis.column(j).dot(&v);
                v -= basis.column(j) * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.set_column(col, &(v / norm));
            col += 1;
        }
    }
}

fn fix_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Normalized squared singular values of the centered data matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// Nonincreasing, summing to 1 unless `degenerate`.
    pub values: Vec<f64>,
    /// Set when every point equals the mean; `values` are then all zero.
    pub degenerate: bool,
}

/// Eigenvalue distribution of the centered data, normalized to sum to one.
/// Has `min(d, n)` entries.
pub fn eigen_spectrum(data: &LabeledDataset) -> Result<Spectrum> {
    if data.is_empty() {
        return Err(DmlError::Empty("spectrum of an empty dataset"));
    }
    let (xc, _) = centered(data);
    let gram = if data.dim() <= data.len() {
        &xc * xc.transpose()
    } else {
        xc.tr_mul(&xc)
    };
    let (vals, _) = sorted_eigen(&gram)?;
    let mut values: Vec<f64> = vals.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let degenerate = !(total > 0.0);
    if degenerate {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v /= total);
    }
    Ok(Spectrum { values, degenerate })
}

/// CSV with header `rank,normalized_eigenvalue`, ranks starting at 1.
pub fn write_spectrum_csv<W: Write>(spectrum: &Spectrum, mut out: W) -> Result<()> {
    writeln!(out, "rank,normalized_eigenvalue")?;
    for (i, v) in spectrum.values.iter().enumerate() {
        writeln!(out, "{},{v:e}", i + 1)?;
    }
    Ok(())
}
