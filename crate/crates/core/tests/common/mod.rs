#![allow(dead_code)]

//! Reference implementations used only by tests. They favour the textbook
//! formula over speed and share no code with the library.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    (&a + a.transpose()) * 0.5
}

/// Cyclic Jacobi eigendecomposition: eigenvalues descending, eigenvectors as columns.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let vals = order.iter().map(|&i| a[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (vals, vecs)
}

/// PSD projection by clamping Jacobi eigenvalues.
pub fn psd_oracle(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = jacobi_eigen(m);
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (c, &l) in vals.iter().enumerate() {
        if l > 0.0 {
            let col = vecs.column(c);
            out += col * col.transpose() * l;
        }
    }
    out
}

pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn outer(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |r, c| x[r] * x[c])
}

/// `A = (xi − xk)(xi − xk)ᵀ − (xi − xj)(xi − xj)ᵀ` formed densely.
pub fn constraint_oracle(xi: &[f64], xj: &[f64], xk: &[f64]) -> DMatrix<f64> {
    outer(&diff(xi, xk)) - outer(&diff(xi, xj))
}

/// `A` from difference vectors `u = xi − xk`, `v = xi − xj`.
pub fn constraint_from_uv(u: &[f64], v: &[f64]) -> DMatrix<f64> {
    outer(u) - outer(v)
}

/// `tr(AᵀB)` by explicit double loop.
pub fn trace_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            s += a[(r, c)] * b[(r, c)];
        }
    }
    s
}

/// Full Gram matrix of the dense constraint matrices.
pub fn gram_oracle(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats.len();
    DMatrix::from_fn(n, n, |a, b| trace_inner(&mats[a], &mats[b]))
}

/// `(x − y)ᵀ M (x − y)` by explicit loops.
pub fn mahalanobis(m: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let d = diff(x, y);
    let mut s = 0.0;
    for r in 0..d.len() {
        for c in 0..d.len() {
            s += d[r] * m[(r, c)] * d[c];
        }
    }
    s
}

pub fn column(points: &DMatrix<f64>, i: usize) -> Vec<f64> {
    points.column(i).iter().copied().collect()
}

/// Exhaustive mAP: every query ranks all others by (distance, index).
pub fn naive_map(m: &DMatrix<f64>, points: &DMatrix<f64>, labels: &[usize]) -> (f64, usize) {
    let n = labels.len();
    let mut aps = Vec::new();
    for q in 0..n {
        let xq = column(points, q);
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != q).map(|j| (mahalanobis(m, &xq, &column(points, j)), j)).collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let total = others.iter().filter(|(_, j)| labels[*j] == labels[q]).count();
        if total == 0 {
            continue;
        }
        let mut hits = 0;
        let mut sum = 0.0;
        for (rank, (_, j)) in others.iter().enumerate() {
            if labels[*j] == labels[q] {
                hits += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        aps.push(sum / total as f64);
    }
    let map = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    (map, aps.len())
}

/// Exhaustive k-NN: full sort by (distance, index), majority vote, ties to
/// the smallest label.
pub fn naive_knn(m: &DMatrix<f64>, train: &DMatrix<f64>, train_labels: &[usize], test: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n_classes = train_labels.iter().max().map_or(0, |c| c + 1);
    (0..test.ncols())
        .map(|q| {
            let xq = column(test, q);
            let mut all: Vec<(f64, usize)> = (0..train.ncols()).map(|j| (mahalanobis(m, &xq, &column(train, j)), j)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut votes = vec![0; n_classes];
            for (_, j) in all.iter().take(k) {
                votes[train_labels[*j]] += 1;
            }
            let top = *votes.iter().max().unwrap();
            votes.iter().position(|&v| v == top).unwrap()
        })
        .collect()
}

/// Plain projected gradient ascent on the dense dual
/// `−Σ ℓ*(α) − αᵀGα/(2λN)` over `[−1, 0]^N`, with `ℓ*(α) = α + (c/2)α²`.
pub fn pga_dual(g: &DMatrix<f64>, lambda: f64, curvature: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = g.nrows();
    let ln = lambda * n as f64;
    let top = 1.05 * top_eigenvalue(g, 2000);
    let step = 1.0 / (top.max(0.0) / ln + curvature).max(1e-12);
    let mut a = vec![0.0; n];
    for _ in 0..iters {
        let ga = g * nalgebra::DVector::from_column_slice(&a);
        for t in 0..n {
            let grad = -1.0 - curvature * a[t] - ga[t] / ln;
            a[t] = (a[t] + step * grad).clamp(-1.0, 0.0);
        }
    }
    (a.clone(), dual_value(g, lambda, curvature, &a))
}

pub fn dual_value(g: &DMatrix<f64>, lambda: f64, curvature: f64, a: &[f64]) -> f64 {
    let n = g.nrows();
    let ln = lambda * n as f64;
    let av = nalgebra::DVector::from_column_slice(a);
    let quad = (av.transpose() * g * &av)[(0, 0)];
    -a.iter().map(|x| x + 0.5 * curvature * x * x).sum::<f64>() - quad / (2.0 * ln)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn top_eigenvalue(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let y = m * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = x.dot(&y);
        x = y / norm;
    }
    lambda
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
