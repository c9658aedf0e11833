//! End-to-end method pipelines, run configuration and reports.
//!
//! Four methods share triplet sampling and the dual solver:
//!
//! - `durp`: Gaussian projection, dual solve in the subspace, metric rebuilt
//!   from original-space differences, then one PSD projection;
//! - `duori`: dual solve in the original space;
//! - `srp`: Gaussian projection, subspace metric `−S/(λN)` lifted as `R M_s Rᵀ`;
//! - `spca`: as `srp` with the top PCA directions as the projection.

pub mod config;
pub mod harness;
pub mod synthetic;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::data::{pca_fit, read_libsvm, LabeledDataset, LibsvmOptions};
use crate::error::{invalid, Result};
use crate::eval::{evaluate, EvalReport};
use crate::metric::{assemble_subspace_metric, metric_from_accumulator, psd_project, recover_metric, SymMatrix};
use crate::par::Backend;
use crate::projection::{ProjectionMatrix, GENERATOR_NAME};
use crate::solver::{csdca_solve_until, DualSolution, EpochRecord, LossModel, SolveControl};
use crate::triplets::{build_cache, project_cache, sample_active_triplets, TripletCache, TripletSet};

pub use config::{Method, RunConfig};

/// Step-size rule of the SGD warm start, recorded in reports.
pub const STEP_SIZE_RULE: &str = "eta_k = 1/(lambda*k) at the k-th SGD visit";

/// Independent 64-bit seed for `stream` derived from `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds used by one trial. Triplets use the trial seed itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub triplets: u64,
    pub projection: u64,
    pub solver: u64,
}

impl TrialSeeds {
    pub fn new(trial_seed: u64) -> Self {
        Self {
            triplets: trial_seed,
            projection: derive_seed(trial_seed, 1),
            solver: derive_seed(trial_seed, 2),
        }
    }
}

/// Output of one learning run.
#[derive(Clone, Debug)]
pub struct LearnedMetric {
    /// Symmetric metric before the PSD projection.
    pub raw: SymMatrix,
    /// `Π_PSD(raw)`.
    pub metric: SymMatrix,
    pub solution: DualSolution,
}

/// Dual solve on `Rᵀ`-projected differences, metric rebuilt in the original space.
pub fn learn_durp(cache: &TripletCache, r: &ProjectionMatrix, loss: &LossModel, lambda: f64, control: SolveControl, seed: u64) -> Result<LearnedMetric> {
    let projected = project_cache(cache, r)?;
    let solution = csdca_solve_until(&projected, loss, lambda, control, seed)?;
    let raw = recover_metric(&solution.alpha, cache, lambda)?;
    finish(raw, solution)
}

/// Dual solve directly on the original-space cache.
pub fn learn_duori(cache: &TripletCache, loss: &LossModel, lambda: f64, control: SolveControl, seed: u64) -> Result<LearnedMetric> {
    let solution = csdca_solve_until(cache, loss, lambda, control, seed)?;
    let raw = recover_metric(&solution.alpha, cache, lambda)?;
    finish(raw, solution)
}

/// Subspace metric `M_s = −S/(λN)` lifted to `R M_s Rᵀ` (SRP and SPCA).
pub fn learn_subspace(cache: &TripletCache, r: &ProjectionMatrix, loss: &LossModel, lambda: f64, control: SolveControl, seed: u64) -> Result<LearnedMetric> {
    let projected = project_cache(cache, r)?;
    let solution = csdca_solve_until(&projected, loss, lambda, control, seed)?;
    let subspace = metric_from_accumulator(&solution.accumulator, lambda, solution.alpha.len());
    let raw = assemble_subspace_metric(&subspace, r)?;
    finish(raw, solution)
}

fn finish(raw: SymMatrix, solution: DualSolution) -> Result<LearnedMetric> {
    let metric = psd_project(&raw)?;
    Ok(LearnedMetric { raw, metric, solution })
}

/// Triplets, projection and solve for one trial of `cfg.method`.
pub fn train_trial(cfg: &RunConfig, train: &LabeledDataset, trial_seed: u64) -> Result<(TripletSet, LearnedMetric)> {
    let seeds = TrialSeeds::new(trial_seed);
    let triplets = sample_active_triplets(train, cfg.triplets, seeds.triplets)?;
    let cache = build_cache(train, &triplets)?;
    let lambda = cfg.lambda_for(triplets.len());
    let loss = cfg.loss_model()?;
    let control = SolveControl { max_epochs: cfg.epochs, gap_tol: None };
    let d = train.dim();
    let learned = match cfg.method {
        Method::Durp => {
            let r = ProjectionMatrix::gaussian(d, cfg.m, seeds.projection)?;
            learn_durp(&cache, &r, &loss, lambda, control, seeds.solver)?
        }
        Method::Duori => learn_duori(&cache, &loss, lambda, control, seeds.solver)?,
        Method::Srp => {
            let r = ProjectionMatrix::gaussian(d, cfg.m, seeds.projection)?;
            learn_subspace(&cache, &r, &loss, lambda, control, seeds.solver)?
        }
        Method::Spca => {
            if cfg.m > d.min(train.len()) {
                return Err(invalid(format!("spca needs m ≤ min(d, n) = {}", d.min(train.len()))));
            }
            let r = ProjectionMatrix::from_pca(&pca_fit(train, cfg.m)?);
            learn_subspace(&cache, &r, &loss, lambda, control, seeds.solver)?
        }
    };
    Ok((triplets, learned))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub eval: EvalReport,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub train_seconds: f64,
    pub trace: Vec<EpochRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub map_mean: f64,
    pub map_std: f64,
    pub knn_mean: f64,
    pub knn_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub config: RunConfig,
    pub generator: String,
    pub step_size_rule: String,
    pub trials: Vec<TrialReport>,
    pub summary: Summary,
    pub generated_unix: u64,
}

impl RunReport {
    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.generated_unix = 0;
        for t in &mut r.trials {
            t.train_seconds = 0.0;
            t.trace.iter_mut().for_each(|e| e.seconds = 0.0);
        }
        r
    }
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `cfg.trials` trials with seeds `cfg.seed + t` and evaluates each metric.
pub fn run_method_on(cfg: &RunConfig, train: &LabeledDataset, test: &LabeledDataset) -> Result<RunReport> {
    cfg.validate()?;
    let results = Backend::default().map(cfg.trials, |t| -> Result<TrialReport> {
        let seed = cfg.seed.wrapping_add(t as u64);
        let start = Instant::now();
        let (_, learned) = train_trial(cfg, train, seed).map_err(|e| invalid(format!("trial {t}: {e}")))?;
        let train_seconds = start.elapsed().as_secs_f64();
        let eval = evaluate(&learned.metric, train, test, cfg.k).map_err(|e| invalid(format!("trial {t}: {e}")))?;
        Ok(TrialReport {
            trial: t,
            seed,
            eval,
            dual_objective: learned.solution.objective,
            duality_gap: learned.solution.gap,
            train_seconds,
            trace: learned.solution.trace,
        })
    });
    let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    let maps: Vec<f64> = trials.iter().map(|t| t.eval.map_score).collect();
    let knns: Vec<f64> = trials.iter().map(|t| t.eval.knn_accuracy).collect();
    let (map_mean, map_std) = mean_std(&maps);
    let (knn_mean, knn_std) = mean_std(&knns);
    Ok(RunReport {
        method: cfg.method,
        config: cfg.clone(),
        generator: GENERATOR_NAME.to_string(),
        step_size_rule: STEP_SIZE_RULE.to_string(),
        trials,
        summary: Summary { map_mean, map_std, knn_mean, knn_std },
        generated_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    })
}

/// Loads the train/test LIBSVM files named in `cfg`; the test file shares the
/// training dimension and label map.
pub fn load_datasets(train: &Path, test: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_ds, map) = read_libsvm(train, &LibsvmOptions::default())?;
    let opts = LibsvmOptions { dim: Some(train_ds.dim()), labels: Some(&map) };
    let (test_ds, _) = read_libsvm(test, &opts)?;
    Ok((train_ds, test_ds))
}

pub fn run_method(cfg: &RunConfig) -> Result<RunReport> {
    let (Some(train), Some(test)) = (&cfg.train_file, &cfg.test_file) else {
        return Err(invalid("run needs both train_file and test_file"));
    };
    let (train, test) = load_datasets(train, test)?;
    run_method_on(cfg, &train, &test)
}
