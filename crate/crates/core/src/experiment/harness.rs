//! Empirical checks of the recovery bounds against a dense reference solve.
//!
//! Both harnesses fix one dataset and one triplet set, solve the full dual
//! with [`dense_oracle_run`], then for each projected dimension `m` and seed
//! solve the projected dual and compare against the reference. `m = d` uses
//! the identity projection.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DmlError, Result};
use crate::gram::{dense_gram, kappa};
use crate::linalg::power_iteration;
use crate::metric::{psd_project, recover_metric};
use crate::par::Backend;
use crate::projection::ProjectionMatrix;
use crate::solver::{csdca_solve_until, dense_oracle_run, DenseSolution, LossModel, SolveControl};
use crate::triplets::{build_cache, project_cache, sample_active_triplets, TripletCache};

use super::derive_seed;
use super::synthetic::{isotropic_dataset, low_rank_dataset};

/// Gap the reference solve aims for, on the averaged primal scale.
pub const ORACLE_GAP_TARGET: f64 = 1e-8;
/// Gap above which the reference solve counts as failed.
pub const ORACLE_GAP_LIMIT: f64 = 1e-6;
/// Constant `c` in the low-rank sample-size condition.
pub const THEOREM1_C: f64 = 1.0 / 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub d: usize,
    /// Rank of the data (low-rank harness only).
    pub r: usize,
    pub n_points: usize,
    pub classes: usize,
    pub triplets: usize,
    pub m_values: Vec<usize>,
    pub seeds: usize,
    pub data_seed: u64,
    pub separation: f64,
    pub delta: f64,
    /// Target gap of each projected solve, averaged scale.
    pub solve_gap: f64,
    pub max_epochs: usize,
    pub oracle_iters: usize,
    /// Smoothing width for the smoothed-hinge harness.
    pub gamma: f64,
    /// Solve projected duals with the dense solver instead of CSDCA.
    pub dense_projected: bool,
}

impl HarnessConfig {
    pub fn low_rank_default() -> Self {
        Self {
            d: 400,
            r: 3,
            n_points: 300,
            classes: 3,
            triplets: 500,
            m_values: vec![5, 10, 20, 50, 100, 400],
            seeds: 10,
            data_seed: 11,
            separation: 1.0,
            delta: 0.1,
            solve_gap: 1e-8,
            max_epochs: 2000,
            oracle_iters: 50_000,
            gamma: 1.0,
            dense_projected: true,
        }
    }

    pub fn full_rank_default() -> Self {
        Self {
            d: 500,
            r: 500,
            n_points: 60,
            classes: 3,
            triplets: 200,
            m_values: vec![310, 400, 500],
            seeds: 10,
            data_seed: 23,
            separation: 0.5,
            delta: 0.1,
            solve_gap: 1e-6 / 200.0,
            max_epochs: 2000,
            oracle_iters: 50_000,
            gamma: 1.0,
            dense_projected: false,
        }
    }

    fn check(&self) -> Result<()> {
        if self.m_values.iter().any(|&m| m == 0 || m > self.d) {
            return Err(invalid(format!("every m must lie in 1..={}", self.d)));
        }
        if self.seeds == 0 || self.triplets == 0 {
            return Err(invalid("seeds and triplets must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta must lie in (0, 1)"));
        }
        Ok(())
    }

    fn projection(&self, m: usize, seed: u64) -> Result<ProjectionMatrix> {
        if m == self.d {
            Ok(ProjectionMatrix::identity(self.d))
        } else {
            ProjectionMatrix::gaussian(self.d, m, derive_seed(seed, m as u64))
        }
    }
}

/// `ε` solving `m = (r+1) ln(2r/δ) / (c ε²)`.
pub fn theorem1_epsilon(m: usize, r: usize, delta: f64) -> f64 {
    ((r as f64 + 1.0) * (2.0 * r as f64 / delta).ln() / (THEOREM1_C * m as f64)).sqrt()
}

/// `3ε/(1 − 3ε)`, defined for `ε ≤ 1/6`.
pub fn theorem1_bound(epsilon: f64) -> Option<f64> {
    (epsilon <= 1.0 / 6.0).then(|| 3.0 * epsilon / (1.0 - 3.0 * epsilon))
}

/// `ε` solving `m = (8/ε²) ln(8N/δ)`.
pub fn theorem2_epsilon(m: usize, n_triplets: usize, delta: f64) -> f64 {
    (8.0 * (8.0 * n_triplets as f64 / delta).ln() / m as f64).sqrt()
}

/// Smallest `m` with `theorem2_epsilon(m) ≤ 1/2`.
pub fn theorem2_min_dim(n_triplets: usize, delta: f64) -> usize {
    (32.0 * (8.0 * n_triplets as f64 / delta).ln()).ceil() as usize
}

/// `max(8εγκ‖α*‖, √(2γη))` with `γ` the Lipschitz constant of `ℓ'`.
pub fn theorem2_bound(epsilon: f64, lipschitz: f64, kappa: f64, alpha_norm: f64, eta: f64) -> f64 {
    (8.0 * epsilon * lipschitz * kappa * alpha_norm).max((2.0 * lipschitz * eta).sqrt())
}

/// Lower quartile, median and upper quartile (linear interpolation).
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        if v.is_empty() {
            return f64::NAN;
        }
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    (at(0.25), at(0.5), at(0.75))
}

/// `(m, seed)` pairs in output order.
fn sweep_points(cfg: &HarnessConfig) -> Vec<(usize, u64)> {
    cfg.m_values.iter().flat_map(|&m| (0..cfg.seeds as u64).map(move |s| (m, s))).collect()
}

struct Instance {
    cache: TripletCache,
    oracle: DenseSolution,
}

fn build_instance(cfg: &HarnessConfig, low_rank: bool, loss: &LossModel) -> Result<Instance> {
    let data = if low_rank {
        low_rank_dataset(cfg.d, cfg.r, cfg.n_points, cfg.classes, cfg.separation, cfg.data_seed)?
    } else {
        isotropic_dataset(cfg.d, cfg.n_points, cfg.classes, cfg.separation, cfg.data_seed)?
    };
    let triplets = sample_active_triplets(&data, cfg.triplets, derive_seed(cfg.data_seed, 99))?;
    let cache = build_cache(&data, &triplets)?;
    let lambda = 1.0 / triplets.len() as f64;
    let oracle = dense_oracle_run(&dense_gram(&cache), loss, lambda, ORACLE_GAP_TARGET, cfg.oracle_iters)?;
    if oracle.gap > ORACLE_GAP_LIMIT {
        return Err(DmlError::OracleNotConverged { gap: oracle.gap, tol: ORACLE_GAP_LIMIT });
    }
    Ok(Instance { cache, oracle })
}

struct ProjectedSolve {
    alpha: Vec<f64>,
    gap: f64,
}

fn solve_projected(cfg: &HarnessConfig, inst: &Instance, loss: &LossModel, m: usize, seed: u64) -> Result<ProjectedSolve> {
    let r = cfg.projection(m, seed)?;
    let projected = project_cache(&inst.cache, &r)?;
    let lambda = 1.0 / inst.cache.len() as f64;
    if cfg.dense_projected {
        let sol = dense_oracle_run(&dense_gram(&projected), loss, lambda, cfg.solve_gap, cfg.oracle_iters)?;
        return Ok(ProjectedSolve { alpha: sol.alpha, gap: sol.gap });
    }
    let control = SolveControl { max_epochs: cfg.max_epochs, gap_tol: Some(cfg.solve_gap) };
    let sol = csdca_solve_until(&projected, loss, lambda, control, derive_seed(seed, 7))?;
    Ok(ProjectedSolve { alpha: sol.alpha, gap: sol.gap })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub m: usize,
    pub errors: Vec<f64>,
    pub q1_error: f64,
    pub median_error: f64,
    pub q3_error: f64,
    pub theorem_epsilon: f64,
    pub theorem_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub config: HarnessConfig,
    pub oracle_gap: f64,
    pub reference_norm: f64,
    pub rows: Vec<Theorem1Row>,
}

impl Theorem1Report {
    pub fn row(&self, m: usize) -> Option<&Theorem1Row> {
        self.rows.iter().find(|r| r.m == m)
    }

    /// Number of adjacent `m` pairs whose median error increases with `m`.
    pub fn trend_inversions(&self) -> usize {
        self.rows.windows(2).filter(|w| w[1].median_error > w[0].median_error).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let c = &self.config;
        writeln!(out, "# low-rank recovery: d={} r={} n_points={} triplets={} seeds={} delta={}", c.d, c.r, c.n_points, c.triplets, c.seeds, c.delta)?;
        writeln!(out, "# reference gap {:e}, reference norm {:e}", self.oracle_gap, self.reference_norm)?;
        writeln!(out, "m,median_error,q1_error,q3_error,seeds,theorem_epsilon,theorem_bound")?;
        for r in &self.rows {
            let bound = r.theorem_bound.map_or(String::new(), |b| format!("{b:e}"));
            writeln!(out, "{},{:e},{:e},{:e},{},{:e},{}", r.m, r.median_error, r.q1_error, r.q3_error, r.errors.len(), r.theorem_epsilon, bound)?;
        }
        Ok(())
    }
}

/// Relative Frobenius error `‖Π(M*) − Π(M̂)‖ / ‖M*‖` of the projected hinge
/// solution on rank-`r` data, across `m` and seeds.
pub fn verify_theorem1(cfg: &HarnessConfig) -> Result<Theorem1Report> {
    cfg.check()?;
    if cfg.r == 0 || cfg.r > cfg.d {
        return Err(invalid("rank must lie in 1..=d"));
    }
    let loss = LossModel::Hinge;
    let inst = build_instance(cfg, true, &loss)?;
    let lambda = 1.0 / inst.cache.len() as f64;
    let reference = recover_metric(&inst.oracle.alpha, &inst.cache, lambda)?;
    let reference_norm = reference.matrix().norm();
    if reference_norm == 0.0 {
        return Err(invalid("reference metric is zero"));
    }
    let reference_psd = psd_project(&reference)?;
    let points = sweep_points(cfg);
    let errors = Backend::default().map(points.len(), |i| -> Result<f64> {
        let (m, seed) = points[i];
        let sol = solve_projected(cfg, &inst, &loss, m, seed)?;
        let est = psd_project(&recover_metric(&sol.alpha, &inst.cache, lambda)?)?;
        Ok((reference_psd.matrix() - est.matrix()).norm() / reference_norm)
    });
    let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = cfg
        .m_values
        .iter()
        .zip(errors.chunks(cfg.seeds))
        .map(|(&m, errs)| {
            let (q1, med, q3) = quartiles(errs);
            let eps = theorem1_epsilon(m, cfg.r, cfg.delta);
            Theorem1Row { m, errors: errs.to_vec(), q1_error: q1, median_error: med, q3_error: q3, theorem_epsilon: eps, theorem_bound: theorem1_bound(eps) }
        })
        .collect();
    Ok(Theorem1Report { config: cfg.clone(), oracle_gap: inst.oracle.gap, reference_norm, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Row {
    pub m: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub condition_met: bool,
    pub solve_gap: f64,
    pub eta: f64,
    pub error: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub config: HarnessConfig,
    pub oracle_gap: f64,
    pub kappa: f64,
    /// `κ` recomputed from spectral norms by power iteration.
    pub kappa_power: f64,
    pub alpha_norm: f64,
    pub lipschitz: f64,
    pub rows: Vec<Theorem2Row>,
}

impl Theorem2Report {
    pub fn satisfied_count(&self, m: usize) -> (usize, usize) {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.m == m).collect();
        (rows.iter().filter(|r| r.satisfied).count(), rows.len())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let c = &self.config;
        writeln!(out, "# full-rank dual recovery: d={} n_points={} triplets={} delta={} smoothing={}", c.d, c.n_points, c.triplets, c.delta, c.gamma)?;
        writeln!(out, "# kappa {:e} (power iteration {:e}), |alpha*| {:e}, reference gap {:e}", self.kappa, self.kappa_power, self.alpha_norm, self.oracle_gap)?;
        writeln!(out, "m,seed,epsilon,condition_met,kappa,eta,measured_error,bound,satisfied")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:e},{},{:e},{:e},{:e},{:e},{}", r.m, r.seed, r.epsilon, r.condition_met, self.kappa, r.eta, r.error, r.bound, r.satisfied)?;
        }
        Ok(())
    }
}

/// κ from dense norm-product matrices and power iteration, as a cross-check
/// of the closed form.
pub fn kappa_by_power(cache: &TripletCache) -> f64 {
    let p = DVector::from_column_slice(cache.uu_norms());
    let q = DVector::from_column_slice(cache.vv_norms());
    let spectral = |a: &DVector<f64>, b: &DVector<f64>| {
        let m = a * b.transpose();
        let gram = m.transpose() * &m;
        power_iteration(&gram, 1e-14, 10_000).max(0.0).sqrt()
    };
    [spectral(&p, &p), spectral(&q, &q), spectral(&p, &q), spectral(&q, &p)]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Dual-variable recovery under the smoothed hinge on full-rank data.
pub fn verify_theorem2(cfg: &HarnessConfig) -> Result<Theorem2Report> {
    cfg.check()?;
    let loss = LossModel::smoothed_hinge(cfg.gamma)?;
    let lipschitz = loss.gradient_lipschitz().ok_or_else(|| invalid("loss gradient is not Lipschitz"))?;
    let inst = build_instance(cfg, false, &loss)?;
    let n = inst.cache.len();
    let stats = kappa(&inst.cache);
    let alpha_star = DVector::from_column_slice(&inst.oracle.alpha);
    let alpha_norm = alpha_star.norm();
    let points = sweep_points(cfg);
    let rows = Backend::default().map(points.len(), |i| -> Result<Theorem2Row> {
        let (m, seed) = points[i];
        let epsilon = theorem2_epsilon(m, n, cfg.delta);
        let sol = solve_projected(cfg, &inst, &loss, m, seed)?;
        // suboptimality of the summed dual objective is at most N times the averaged gap
        let eta = (sol.gap * n as f64).max(0.0);
        let error = (DVector::from_column_slice(&sol.alpha) - &alpha_star).norm();
        let bound = theorem2_bound(epsilon, lipschitz, stats.kappa, alpha_norm, eta);
        Ok(Theorem2Row {
            m,
            seed,
            epsilon,
            condition_met: epsilon <= 0.5,
            solve_gap: sol.gap,
            eta,
            error,
            bound,
            satisfied: error <= bound,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Theorem2Report {
        config: cfg.clone(),
        oracle_gap: inst.oracle.gap,
        kappa: stats.kappa,
        kappa_power: kappa_by_power(&inst.cache),
        alpha_norm,
        lipschitz,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]), (2.0, 3.0, 4.0));
        assert_eq!(quartiles(&[1.0, 2.0]), (1.25, 1.5, 1.75));
    }

    #[test]
    fn epsilon_formulas_invert_sample_size() {
        let eps = theorem2_epsilon(320, 200, 0.1);
        let m = 8.0 / (eps * eps) * (8.0 * 200.0 / 0.1f64).ln();
        assert!((m - 320.0).abs() < 1e-9);
        assert!(theorem2_epsilon(theorem2_min_dim(200, 0.1), 200, 0.1) <= 0.5);
        assert!(theorem2_epsilon(theorem2_min_dim(200, 0.1) - 1, 200, 0.1) > 0.5);
        let e1 = theorem1_epsilon(400, 3, 0.1);
        let m1 = 4.0 * (60.0f64).ln() / (THEOREM1_C * e1 * e1);
        assert!((m1 - 400.0).abs() < 1e-9);
        assert_eq!(theorem1_bound(0.2), None);
        assert!((theorem1_bound(0.1).unwrap() - 0.3 / 0.7).abs() < 1e-15);
    }
}
