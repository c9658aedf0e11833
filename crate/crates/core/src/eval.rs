//! Ranking (mAP) and k-NN classification scores for a learned metric.
//!
//! Pairwise distances use `(x − y)ᵀ(Mx − My)` with `MX` computed once, which
//! costs `O(d²n)` up front and `O(d)` per pair.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{check_dim, invalid, Result};
use crate::par::Backend;
use crate::metric::SymMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "map")]
    pub map_score: f64,
    pub knn_accuracy: f64,
    pub k: usize,
    pub n_queries: usize,
    pub excluded_queries: usize,
}

/// Mean average precision together with the query bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapOutcome {
    pub map: f64,
    /// Queries with at least one relevant item.
    pub n_queries: usize,
    /// Queries dropped because no other point shares their class.
    pub excluded: usize,
}

struct Transformed<'a> {
    points: &'a DMatrix<f64>,
    mapped: DMatrix<f64>,
}

impl<'a> Transformed<'a> {
    fn new(m: &SymMatrix, points: &'a DMatrix<f64>) -> Result<Self> {
        check_dim(m.dim(), points.nrows())?;
        Ok(Self { points, mapped: m.matrix() * points })
    }

    fn col(mat: &DMatrix<f64>, i: usize) -> &[f64] {
        let d = mat.nrows();
        &mat.as_slice()[i * d..(i + 1) * d]
    }
}

fn cross_distance(a: &Transformed<'_>, i: usize, b: &Transformed<'_>, j: usize) -> f64 {
    let (x, mx) = (Transformed::col(a.points, i), Transformed::col(&a.mapped, i));
    let (y, my) = (Transformed::col(b.points, j), Transformed::col(&b.mapped, j));
    x.iter()
        .zip(y)
        .zip(mx.iter().zip(my))
        .map(|((xa, ya), (ma, mb))| (xa - ya) * (ma - mb))
        .sum::<f64>()
        + 0.0 // −0.0 → +0.0 so exact ties fall back to the index order
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Average precision of one ranked relevance list; `None` when nothing is relevant.
pub fn average_precision(relevant: impl IntoIterator<Item = bool>) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, rel) in relevant.into_iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Every test point queries all other test points ranked by ascending distance
/// (ties by index); relevance means same class.
pub fn map_score(m: &SymMatrix, test: &LabeledDataset) -> Result<f64> {
    Ok(map_details(m, test, Backend::default())?.map)
}

pub fn map_details(m: &SymMatrix, test: &LabeledDataset, backend: Backend) -> Result<MapOutcome> {
    let n = test.len();
    if n < 2 {
        return Err(invalid(format!("mAP needs at least two test points, got {n}")));
    }
    let tr = Transformed::new(m, test.points())?;
    let labels = test.labels();
    let per_query = backend.map(n, |q| {
        let mut ranked: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != q)
            .map(|j| (cross_distance(&tr, q, &tr, j), j))
            .collect();
        ranked.sort_unstable_by(by_distance_then_index);
        average_precision(ranked.iter().map(|&(_, j)| labels[j] == labels[q]))
    });
    let scored: Vec<f64> = per_query.iter().flatten().copied().collect();
    let n_queries = scored.len();
    let map = if n_queries == 0 { 0.0 } else { scored.iter().sum::<f64>() / n_queries as f64 };
    Ok(MapOutcome { map, n_queries, excluded: n - n_queries })
}

/// Majority vote among the `k` nearest training points.
///
/// Distance ties go to the smaller training index, vote ties to the
/// smallest class id.
pub fn knn_predict(m: &SymMatrix, train: &LabeledDataset, test: &LabeledDataset, k: usize, backend: Backend) -> Result<Vec<usize>> {
    if k == 0 || k > train.len() {
        return Err(invalid(format!("k = {k} must lie in 1..={}", train.len())));
    }
    check_dim(train.dim(), test.dim())?;
    let trn = Transformed::new(m, train.points())?;
    let tst = Transformed::new(m, test.points())?;
    let n_classes = train.n_classes();
    let labels = train.labels();
    Ok(backend.map(test.len(), |q| {
        let mut cand: Vec<(f64, usize)> = (0..train.len())
            .map(|j| (cross_distance(&tst, q, &trn, j), j))
            .collect();
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_distance_then_index);
            cand.truncate(k);
        }
        let mut votes = vec![0usize; n_classes];
        for &(_, j) in &cand {
            votes[labels[j]] += 1;
        }
        // first maximum = smallest class id among ties
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best
    }))
}

pub fn knn_accuracy(m: &SymMatrix, train: &LabeledDataset, test: &LabeledDataset, k: usize) -> Result<f64> {
    knn_accuracy_with(m, train, test, k, Backend::default())
}

pub fn knn_accuracy_with(m: &SymMatrix, train: &LabeledDataset, test: &LabeledDataset, k: usize, backend: Backend) -> Result<f64> {
    if test.is_empty() {
        return Err(invalid("k-NN accuracy needs at least one test point"));
    }
    let pred = knn_predict(m, train, test, k, backend)?;
    let correct = pred.iter().zip(test.labels()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / test.len() as f64)
}

/// mAP on `test` and k-NN accuracy of `test` against `train`.
pub fn evaluate(m: &SymMatrix, train: &LabeledDataset, test: &LabeledDataset, k: usize) -> Result<EvalReport> {
    evaluate_with(m, train, test, k, Backend::default())
}

pub fn evaluate_with(m: &SymMatrix, train: &LabeledDataset, test: &LabeledDataset, k: usize, backend: Backend) -> Result<EvalReport> {
    let map = map_details(m, test, backend)?;
    let knn = knn_accuracy_with(m, train, test, k, backend)?;
    Ok(EvalReport {
        map_score: map.map,
        knn_accuracy: knn,
        k,
        n_queries: map.n_queries,
        excluded_queries: map.excluded,
    })
}
