//! Active-triplet sampling and the difference-vector cache.
//!
//! A triplet `(i, j, k)` has `label(i) = label(j) ≠ label(k)`. Its constraint
//! matrix is `A_t = u uᵀ − v vᵀ` with `u = x_i − x_k` and `v = x_i − x_j`; the
//! cache keeps `u`, `v` and their squared norms and never forms `A_t`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{check_dim, invalid, DmlError, Result};
use crate::par::Backend;
use crate::projection::ProjectionMatrix;

/// Rejection sampling gives up after this many draws per requested triplet.
pub const DRAWS_PER_TRIPLET: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triplet {
    /// Anchor.
    pub i: usize,
    /// Same-class partner.
    pub j: usize,
    /// Different-class point.
    pub k: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// CSV with header `i,j,k`, 0-based indices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,k")?;
        for t in &self.triplets {
            writeln!(out, "{},{},{}", t.i, t.j, t.k)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut triplets = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (n == 0 && line == "i,j,k") {
                continue;
            }
            let err = || DmlError::Parse { line: n + 1, msg: format!("expected i,j,k, found {line:?}") };
            let mut it = line.split(',').map(|s| s.trim().parse::<usize>());
            let (Some(Ok(i)), Some(Ok(j)), Some(Ok(k)), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(err());
            };
            triplets.push(Triplet { i, j, k });
        }
        Ok(Self { triplets })
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Draws `count` Euclidean-active triplets by rejection sampling.
///
/// Each draw picks `i` uniformly (redrawn when its class is a singleton), `j`
/// uniformly from the rest of `i`'s class and `k` uniformly from the other
/// classes. A draw is kept when `1 + ‖x_i − x_j‖² − ‖x_i − x_k‖² > 0`.
/// Duplicates are allowed. Fails after `DRAWS_PER_TRIPLET · count` draws.
pub fn sample_active_triplets(data: &LabeledDataset, count: usize, seed: u64) -> Result<TripletSet> {
    if count == 0 {
        return Ok(TripletSet::default());
    }
    let members = data.class_members();
    let n = data.len();
    let populated = members.iter().filter(|m| !m.is_empty()).count();
    if populated < 2 {
        return Err(invalid("triplet sampling needs at least two classes"));
    }
    if members.iter().all(|m| m.len() < 2) {
        return Err(invalid("triplet sampling needs a class with at least two members"));
    }
    // position of each point inside its class list, for O(1) "other than i" draws
    let mut rank_in_class = vec![0usize; n];
    for m in &members {
        for (r, &i) in m.iter().enumerate() {
            rank_in_class[i] = r;
        }
    }
    let labels = data.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = DRAWS_PER_TRIPLET.saturating_mul(count);
    let mut triplets = Vec::with_capacity(count);
    let mut draws = 0usize;

    while triplets.len() < count {
        if draws >= cap {
            return Err(DmlError::InsufficientTriplets {
                requested: count,
                accepted: triplets.len(),
                draws,
                rate: triplets.len() as f64 / draws as f64,
            });
        }
        draws += 1;
        let i = rng.random_range(0..n);
        let class = &members[labels[i]];
        if class.len() < 2 {
            continue;
        }
        let mut jr = rng.random_range(0..class.len() - 1);
        if jr >= rank_in_class[i] {
            jr += 1;
        }
        let j = class[jr];
        let others = n - class.len();
        let mut kr = rng.random_range(0..others);
        // walk the other classes to find the kr-th point outside i's class
        let mut k = usize::MAX;
        for (c, m) in members.iter().enumerate() {
            if c == labels[i] {
                continue;
            }
            if kr < m.len() {
                k = m[kr];
                break;
            }
            kr -= m.len();
        }
        let (xi, xj, xk) = (data.point(i), data.point(j), data.point(k));
        if 1.0 + squared_distance(xi, xj) - squared_distance(xi, xk) > 0.0 {
            triplets.push(Triplet { i, j, k });
        }
    }
    Ok(TripletSet { triplets })
}

/// Difference vectors of every triplet in some space of dimension `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletCache {
    /// `p × N`, column `t` is `x_i − x_k`.
    u: DMatrix<f64>,
    /// `p × N`, column `t` is `x_i − x_j`.
    v: DMatrix<f64>,
    uu: Vec<f64>,
    vv: Vec<f64>,
}

impl TripletCache {
    pub fn from_differences(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        check_dim(u.nrows(), v.nrows())?;
        check_dim(u.ncols(), v.ncols())?;
        let uu = u.column_iter().map(|c| c.norm_squared()).collect();
        let vv = v.column_iter().map(|c| c.norm_squared()).collect();
        Ok(Self { u, v, uu, vv })
    }

    pub fn space_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u_matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v_matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    #[inline]
    pub fn u(&self, t: usize) -> &[f64] {
        let p = self.space_dim();
        &self.u.as_slice()[t * p..(t + 1) * p]
    }

    #[inline]
    pub fn v(&self, t: usize) -> &[f64] {
        let p = self.space_dim();
        &self.v.as_slice()[t * p..(t + 1) * p]
    }

    /// `‖u_t‖²` for every triplet.
    pub fn uu_norms(&self) -> &[f64] {
        &self.uu
    }

    /// `‖v_t‖²` for every triplet.
    pub fn vv_norms(&self) -> &[f64] {
        &self.vv
    }

    /// Dense `A_t = u uᵀ − v vᵀ`. Only for small `p`.
    pub fn constraint_matrix(&self, t: usize) -> DMatrix<f64> {
        let u = self.u.column(t);
        let v = self.v.column(t);
        u * u.transpose() - v * v.transpose()
    }

    /// Hinge margins `‖u_t‖² − ‖v_t‖²` under the Euclidean metric.
    pub fn euclidean_margins(&self) -> Vec<f64> {
        self.uu.iter().zip(&self.vv).map(|(a, b)| a - b).collect()
    }
}

pub fn build_cache(data: &LabeledDataset, triplets: &TripletSet) -> Result<TripletCache> {
    build_cache_with(data, triplets, Backend::default())
}

pub fn build_cache_with(data: &LabeledDataset, triplets: &TripletSet, backend: Backend) -> Result<TripletCache> {
    let n = data.len();
    if let Some(t) = triplets.triplets.iter().find(|t| t.i >= n || t.j >= n || t.k >= n) {
        return Err(invalid(format!("triplet {t:?} indexes past {n} points")));
    }
    let p = data.dim();
    let count = triplets.len();
    let mut u = DMatrix::zeros(p, count);
    let mut v = DMatrix::zeros(p, count);
    if p > 0 {
        let fill = |dst: &mut [f64], other: fn(&Triplet) -> usize| {
            let mut cols: Vec<&mut [f64]> = dst.chunks_mut(p).collect();
            backend.for_each_mut(&mut cols, |t, col| {
                let tr = &triplets.triplets[t];
                let (xi, xo) = (data.point(tr.i), data.point(other(tr)));
                for ((c, a), b) in col.iter_mut().zip(xi).zip(xo) {
                    *c = a - b;
                }
            });
        };
        fill(u.as_mut_slice(), |t| t.k);
        fill(v.as_mut_slice(), |t| t.j);
    }
    TripletCache::from_differences(u, v)
}

/// Cache of `Rᵀu_t`, `Rᵀv_t`. Exact: `RᵀA_tR = (Rᵀu)(Rᵀu)ᵀ − (Rᵀv)(Rᵀv)ᵀ`.
pub fn project_cache(cache: &TripletCache, r: &ProjectionMatrix) -> Result<TripletCache> {
    project_cache_with(cache, r, Backend::default())
}

pub fn project_cache_with(cache: &TripletCache, r: &ProjectionMatrix, backend: Backend) -> Result<TripletCache> {
    check_dim(r.input_dim(), cache.space_dim())?;
    let u = r.apply_with(&cache.u, backend)?;
    let v = r.apply_with(&cache.v, backend)?;
    TripletCache::from_differences(u, v)
}
