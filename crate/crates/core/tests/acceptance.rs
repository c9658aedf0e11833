//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! with its measurements, then asserts.

mod common;

use std::time::{Duration, Instant};

use common::*;
use durp::data::{read_libsvm, LibsvmOptions};
use durp::eval::{knn_predict, map_details};
use durp::experiment::harness::*;
use durp::experiment::synthetic::gaussian_blobs;
use durp::experiment::*;
use durp::gram::{dense_gram, gram_entry, gram_oracle, GramView};
use durp::metric::{psd_project, SymMatrix};
use durp::par::Backend;
use durp::projection::ProjectionMatrix;
use durp::solver::{csdca_solve, LossModel, SolveControl};
use durp::triplets::{build_cache, sample_active_triplets, TripletCache};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const GRAM_REL_TOL: f64 = 1e-9;
const SOLVER_ABS_TOL: f64 = 1e-3;
const GAP_TOL: f64 = 1e-8;
/// Point norm of the solver instances; keeps max G_tt below about 0.4.
const SOLVER_DATA_SCALE: f64 = 0.3;
const T1_E_MAX_M: f64 = 1e-2;
const T1_E_50: f64 = 0.5;
const T1_MAX_INVERSIONS: usize = 1;
const T2_MIN_SATISFIED: usize = 9;
const KAPPA_REL_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-10;
const USPS_MAP: f64 = 0.671;
const USPS_MAP_TOL: f64 = 0.05;
const USPS_SRP_MARGIN: f64 = 0.20;
const USPS_KNN_TOL: f64 = 0.05;
const SYNTH_MIN_WINS: usize = 4;

fn report(n: u32, pass: bool, detail: String, elapsed: Duration, limit: Duration) -> bool {
    let ok = pass && elapsed <= limit;
    println!(
        "criterion {n}: {} {detail} ({:.2}s, limit {}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

#[test]
fn criterion_1_gram_oracles() {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut worst = 0.0f64;
    let mut entries = 0usize;
    for _ in 0..50 {
        let d = r.random_range(1..=20usize);
        let n = r.random_range(1..=30usize);
        let cache = TripletCache::from_differences(random_matrix(&mut r, d, n), random_matrix(&mut r, d, n)).unwrap();
        let view = GramView::new(&cache);
        let mats: Vec<DMatrix<f64>> = (0..n).map(|t| constraint_from_uv(cache.u(t), cache.v(t))).collect();
        let zs: Vec<DVector<f64>> = (0..n)
            .map(|t| {
                let u = DVector::from_column_slice(cache.u(t));
                let v = DVector::from_column_slice(cache.v(t));
                u.kronecker(&u) - v.kronecker(&v)
            })
            .collect();
        for a in 0..n {
            for b in 0..n {
                let e = gram_entry(&view, a, b);
                let scale = (mats[a].norm() * mats[b].norm()).max(1e-300);
                for other in [trace_inner(&mats[a], &mats[b]), zs[a].dot(&zs[b]), gram_oracle(&view, a, b).unwrap()] {
                    worst = worst.max((e - other).abs() / scale.max(e.abs()));
                }
                entries += 1;
            }
        }
    }
    let ok = report(1, worst <= GRAM_REL_TOL, format!("{entries} entries, worst relative error {worst:.2e}"), start.elapsed(), Duration::from_secs(5));
    assert!(ok);
}

#[test]
fn criterion_2_solver_optimality() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut gap_ok = true;
    for inst in 0..20u64 {
        let p = 5 + (inst as usize % 4) * 5;
        let n = 50 + (inst as usize % 4) * 50;
        let ds = gaussian_blobs(3, 20, p, SOLVER_DATA_SCALE / (p as f64).sqrt(), 1.0, inst).unwrap();
        let cache = build_cache(&ds, &sample_active_triplets(&ds, n, inst).unwrap()).unwrap();
        let loss = if inst % 2 == 0 { LossModel::Hinge } else { LossModel::SmoothedHinge { gamma: 1.0 } };
        let lambda = 1.0 / n as f64;
        let sol = csdca_solve(&cache, &loss, lambda, 3, inst).unwrap();
        let (_, oracle) = pga_dual(&dense_gram(&cache), lambda, loss.conjugate_curvature(), 5000);
        worst = worst.max((sol.objective - oracle).abs());
        gap_ok &= sol.trace.iter().all(|e| e.duality_gap >= -GAP_TOL);
        gap_ok &= sol.trace.windows(2).all(|w| w[1].duality_gap <= w[0].duality_gap);
    }
    let ok = report(
        2,
        worst <= SOLVER_ABS_TOL && gap_ok,
        format!("worst |D - D_oracle| {worst:.2e}, gap nonnegative and nonincreasing: {gap_ok}"),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

#[test]
fn criterion_3_identity_projection() {
    let start = Instant::now();
    let ds = gaussian_blobs(3, 30, 12, 0.3, 2.0, 5).unwrap();
    let cache = build_cache(&ds, &sample_active_triplets(&ds, 500, 5).unwrap()).unwrap();
    let control = SolveControl { max_epochs: 3, gap_tol: None };
    let mut identical = true;
    for loss in [LossModel::Hinge, LossModel::SmoothedHinge { gamma: 0.5 }] {
        let a = learn_durp(&cache, &ProjectionMatrix::identity(12), &loss, 1.0 / 500.0, control, 77).unwrap();
        let b = learn_duori(&cache, &loss, 1.0 / 500.0, control, 77).unwrap();
        identical &= a.solution.alpha.iter().zip(&b.solution.alpha).all(|(x, y)| x.to_bits() == y.to_bits());
        identical &= a.metric.matrix().iter().zip(b.metric.matrix().iter()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    let ok = report(3, identical, format!("alpha and metric bit-identical: {identical}"), start.elapsed(), Duration::from_secs(5));
    assert!(ok);
}

#[test]
fn criterion_4_low_rank_trend() {
    let start = Instant::now();
    let cfg = HarnessConfig::low_rank_default();
    let rep = verify_theorem1(&cfg).unwrap();
    let e_full = rep.row(cfg.d).unwrap().median_error;
    let e_50 = rep.row(50).unwrap().median_error;
    let inversions = rep.trend_inversions();
    let medians: Vec<String> = rep.rows.iter().map(|r| format!("{}:{:.3e}", r.m, r.median_error)).collect();
    let ok = report(
        4,
        inversions <= T1_MAX_INVERSIONS && e_full <= T1_E_MAX_M && e_50 <= T1_E_50,
        format!("medians [{}], inversions {inversions}, e({}) {e_full:.2e}, e(50) {e_50:.3}", medians.join(" "), cfg.d),
        start.elapsed(),
        Duration::from_secs(300),
    );
    assert!(ok);
}

#[test]
fn criterion_5_dual_recovery_bound() {
    let start = Instant::now();
    let cfg = HarnessConfig::full_rank_default();
    let rep = verify_theorem2(&cfg).unwrap();
    let mut pass = true;
    let mut counts = Vec::new();
    for &m in &cfg.m_values {
        let (sat, total) = rep.satisfied_count(m);
        pass &= total == cfg.seeds && sat >= T2_MIN_SATISFIED;
        counts.push(format!("m={m}: {sat}/{total}"));
    }
    let eta_max = rep.rows.iter().map(|r| r.eta).fold(0.0, f64::max);
    pass &= eta_max <= 1e-6;
    let kappa_err = (rep.kappa - rep.kappa_power).abs() / rep.kappa;
    pass &= kappa_err <= KAPPA_REL_TOL;
    let n_over_d = cfg.triplets as f64 / cfg.d as f64;
    let ok = report(
        5,
        pass,
        format!(
            "{}, max eta {eta_max:.1e}, kappa {:.4e} (power rel diff {kappa_err:.1e}, kappa/(N/d) = {:.1})",
            counts.join(", "),
            rep.kappa,
            rep.kappa / n_over_d
        ),
        start.elapsed(),
        Duration::from_secs(300),
    );
    assert!(ok);
}

fn usps_paths() -> Option<(String, String)> {
    Some((std::env::var("DURP_USPS_TRAIN").ok()?, std::env::var("DURP_USPS_TEST").ok()?))
}

#[test]
fn criterion_6_end_to_end() {
    let start = Instant::now();
    if let Some((train, test)) = usps_paths() {
        let (train, test) = load_datasets(train.as_ref(), test.as_ref()).unwrap();
        let base = RunConfig::default();
        let run = |method| run_method_on(&RunConfig { method, ..base.clone() }, &train, &test).unwrap().summary;
        let (durp, srp, duori) = (run(Method::Durp), run(Method::Srp), run(Method::Duori));
        let pass = (durp.map_mean - USPS_MAP).abs() <= USPS_MAP_TOL
            && durp.map_mean - srp.map_mean >= USPS_SRP_MARGIN
            && (durp.knn_mean - duori.knn_mean).abs() <= USPS_KNN_TOL;
        let ok = report(
            6,
            pass,
            format!(
                "usps: durp mAP {:.3}±{:.3}, srp mAP {:.3}±{:.3}, knn durp {:.3} duori {:.3}",
                durp.map_mean, durp.map_std, srp.map_mean, srp.map_std, durp.knn_mean, duori.knn_mean
            ),
            start.elapsed(),
            Duration::from_secs(1200),
        );
        assert!(ok);
        return;
    }
    let d = 100;
    let sigma = 1.0 / (d as f64).sqrt();
    let train = gaussian_blobs(3, 100, d, sigma, 3.0, 1).unwrap();
    let test = gaussian_blobs(3, 100, d, sigma, 3.0, 2).unwrap();
    let base = RunConfig::default();
    let durp = run_method_on(&RunConfig { method: Method::Durp, ..base.clone() }, &train, &test).unwrap();
    let srp = run_method_on(&RunConfig { method: Method::Srp, ..base }, &train, &test).unwrap();
    let wins = durp.trials.iter().zip(&srp.trials).filter(|(a, b)| a.eval.map_score > b.eval.map_score).count();
    let ok = report(
        6,
        wins >= SYNTH_MIN_WINS,
        format!(
            "usps unavailable, synthetic substitute: durp > srp in {wins}/5 trials (mAP {:.3} vs {:.3})",
            durp.summary.map_mean, srp.summary.map_mean
        ),
        start.elapsed(),
        Duration::from_secs(1200),
    );
    assert!(ok);
}

#[test]
fn criterion_7_psd_projection() {
    let start = Instant::now();
    let mut r = rng(7);
    let (mut idem, mut nonexp, mut optimal, mut oracle) = (0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..100 {
        let a = random_symmetric(&mut r, 20) * 5.0;
        let b = random_symmetric(&mut r, 20) * 5.0;
        let pa = psd_project(&SymMatrix::new(a.clone()).unwrap()).unwrap();
        let pb = psd_project(&SymMatrix::new(b.clone()).unwrap()).unwrap();
        idem = idem.max((psd_project(&pa).unwrap().matrix() - pa.matrix()).norm() / (1.0 + pa.matrix().norm()));
        nonexp = nonexp.max((pa.matrix() - pb.matrix()).norm() - (&a - &b).norm());
        let best = (&a - pa.matrix()).norm();
        for _ in 0..10 {
            let f = random_matrix(&mut r, 20, 20);
            optimal = optimal.max(best - (&a - &f * f.transpose()).norm());
            let g = random_matrix(&mut r, 20, 20) * 1e-3;
            optimal = optimal.max(best - (&a - (pa.matrix() + &g * g.transpose())).norm());
        }
        oracle = oracle.max((pa.matrix() - psd_oracle(&a)).amax());
    }
    let pass = idem <= PSD_TOL && nonexp <= PSD_TOL && optimal <= PSD_TOL && oracle <= 1e-9;
    let ok = report(
        7,
        pass,
        format!("idempotence {idem:.1e}, expansion {nonexp:.1e}, optimality excess {optimal:.1e}, oracle diff {oracle:.1e}"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

#[test]
fn criterion_8_evaluation_oracles() {
    let start = Instant::now();
    let mut r = rng(8);
    let mut mismatches = 0usize;
    for inst in 0..50 {
        let d = r.random_range(1..=10usize);
        let n = r.random_range(10..=200usize);
        let classes = r.random_range(2..=6usize);
        let integer = inst % 4 == 0;
        let pts = DMatrix::from_fn(d, n, |_, _| if integer { r.random_range(-2..=2) as f64 } else { r.random_range(-1.0..1.0) });
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let f = if integer { DMatrix::from_fn(d, d, |i, j| if i == j { r.random_range(0..=1) as f64 } else { 0.0 }) } else { random_matrix(&mut r, d, d) };
        let m = &f * f.transpose();
        let ds = durp::LabeledDataset::new(pts, labels).unwrap();
        let sm = SymMatrix::new(m.clone()).unwrap();
        let lib = map_details(&sm, &ds, Backend::default()).unwrap();
        let (naive, _) = naive_map(&m, ds.points(), ds.labels());
        mismatches += usize::from(lib.map != naive);
        let split = n / 2;
        let train = ds.subset(&(0..split).collect::<Vec<_>>());
        let test = ds.subset(&(split..n).collect::<Vec<_>>());
        let k = r.random_range(1..=split.min(9));
        let pred = knn_predict(&sm, &train, &test, k, Backend::default()).unwrap();
        mismatches += usize::from(pred != naive_knn(&m, train.points(), train.labels(), test.points(), k));
    }
    let ok = report(8, mismatches == 0, format!("{mismatches} mismatches over 50 instances"), start.elapsed(), Duration::from_secs(30));
    assert!(ok);
}

#[test]
fn usps_loader_smoke() {
    // exercises the dataset path used by criterion 6 when files are supplied
    if let Some((train, _)) = usps_paths() {
        let (ds, _) = read_libsvm(train.as_ref(), &LibsvmOptions::default()).unwrap();
        assert_eq!(ds.dim(), 256);
    }
}
