//! Synthetic labeled datasets for tests, benchmarks and the bound harnesses.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::LabeledDataset;
use crate::error::{invalid, Result};

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn round_robin_labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % classes).collect()
}

fn check_shape(n: usize, classes: usize) -> Result<()> {
    if classes < 2 || n < 2 * classes {
        return Err(invalid(format!("need at least 2 classes with 2 points each (n = {n}, classes = {classes})")));
    }
    Ok(())
}

/// Isotropic Gaussian classes in `dim` dimensions with standard deviation
/// `sigma`. Class `c` is centred at `(gap·σ/√2)·e_c`, so any two means are
/// `gap·σ` apart.
pub fn gaussian_blobs(classes: usize, per_class: usize, dim: usize, sigma: f64, gap: f64, seed: u64) -> Result<LabeledDataset> {
    if classes > dim {
        return Err(invalid("gaussian_blobs needs classes ≤ dim"));
    }
    let n = classes * per_class;
    check_shape(n, classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = round_robin_labels(n, classes);
    let offset = gap * sigma / 2f64.sqrt();
    let mut points = normal_matrix(&mut rng, dim, n) * sigma;
    for (i, &c) in labels.iter().enumerate() {
        points[(c, i)] += offset;
    }
    LabeledDataset::new(points, labels)
}

/// Orthonormal `d × r` basis from the QR factor of a Gaussian matrix.
pub fn random_orthonormal(d: usize, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    if r == 0 || r > d {
        return Err(invalid(format!("need 0 < r ≤ d, got r = {r}, d = {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(normal_matrix(&mut rng, d, r).qr().q())
}

/// Points `x = U f` in a random `r`-dimensional subspace of `R^d`. The latent
/// `f` is a class mean (scaled by `separation`) plus unit Gaussian noise, and
/// points are rescaled so that `E‖x‖² ≈ 1`.
pub fn low_rank_dataset(d: usize, r: usize, n: usize, classes: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    check_shape(n, classes)?;
    let basis = random_orthonormal(d, r, seed ^ 0x5EED)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = normal_matrix(&mut rng, r, classes) * separation;
    let labels = round_robin_labels(n, classes);
    let mut latent = normal_matrix(&mut rng, r, n);
    for (i, &c) in labels.iter().enumerate() {
        latent.column_mut(i).axpy(1.0, &means.column(c), 1.0);
    }
    let scale = 1.0 / (r as f64 * (1.0 + separation * separation)).sqrt();
    LabeledDataset::new(basis * latent * scale, labels)
}

/// Full-rank data: class means `N(0, sep²/d · I)` plus `N(0, I/d)` noise, so
/// `E‖x‖² = 1 + sep²`.
pub fn isotropic_dataset(d: usize, n: usize, classes: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    check_shape(n, classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = 1.0 / (d as f64).sqrt();
    let means = normal_matrix(&mut rng, d, classes) * (separation * s);
    let labels = round_robin_labels(n, classes);
    let mut points = normal_matrix(&mut rng, d, n) * s;
    for (i, &c) in labels.iter().enumerate() {
        points.column_mut(i).axpy(1.0, &means.column(c), 1.0);
    }
    LabeledDataset::new(points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_have_expected_layout() {
        let ds = gaussian_blobs(3, 10, 5, 1.0, 3.0, 1).unwrap();
        assert_eq!((ds.dim(), ds.len(), ds.n_classes()), (5, 30, 3));
        assert_eq!(gaussian_blobs(3, 10, 5, 1.0, 3.0, 1).unwrap(), ds);
        assert!(gaussian_blobs(6, 10, 5, 1.0, 3.0, 1).is_err());
    }

    #[test]
    fn low_rank_has_rank_r() {
        let ds = low_rank_dataset(20, 3, 40, 3, 2.0, 7).unwrap();
        let sv = ds.points().clone().singular_values();
        let top = sv.max();
        assert_eq!(sv.iter().filter(|s| **s > 1e-10 * top).count(), 3);
    }

    #[test]
    fn isotropic_norms_near_target() {
        let ds = isotropic_dataset(400, 50, 2, 0.5, 3).unwrap();
        let mean_sq = ds.points().column_iter().map(|c| c.norm_squared()).sum::<f64>() / 50.0;
        assert!((mean_sq - 1.25).abs() < 0.2, "{mean_sq}");
    }
}
