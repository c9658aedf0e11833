//! Dual solver for the triplet problem
//!
//! ```text
//! primal:  min_M  λ/2 ‖M‖_F² + (1/N) Σ_t ℓ(⟨M, A_t⟩)
//! dual:    max_{α ∈ [-1,0]^N}  −Σ_t ℓ*(α_t) − (1/(2λN)) αᵀGα,   M = −S/(λN),  S = Σ_t α_t A_t
//! ```
//!
//! The dual objective is reported in this summed form. Primal values and the
//! duality gap are reported on the averaged scale of the primal, i.e.
//! `gap = P(M) − D(α)/N`.
//!
//! `csdca_solve` runs one SGD epoch with step `1/(λt)` to warm-start the dual
//! variables, then full passes of exact coordinate ascent. All work runs
//! against the `p × p` accumulator `S`; `G` is never formed.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, DmlError, Result};
use crate::gram::{accumulate, inner_with_constraints, GramView};
use crate::linalg::{power_iteration, quad_form};
use crate::par::Backend;
use crate::triplets::TripletCache;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    /// `ℓ(z) = max(0, 1 − z)`.
    Hinge,
    /// Quadratically smoothed hinge with smoothing width `gamma`; the
    /// derivative is `1/gamma`-Lipschitz.
    SmoothedHinge { gamma: f64 },
}

impl LossModel {
    pub fn smoothed_hinge(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(LossModel::SmoothedHinge { gamma })
        } else {
            Err(invalid(format!("smoothing gamma must be positive, got {gamma}")))
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match *self {
            LossModel::Hinge => (1.0 - z).max(0.0),
            LossModel::SmoothedHinge { gamma } => {
                if z >= 1.0 {
                    0.0
                } else if z >= 1.0 - gamma {
                    (1.0 - z).powi(2) / (2.0 * gamma)
                } else {
                    1.0 - z - gamma / 2.0
                }
            }
        }
    }

    /// `ℓ'(z) ∈ [−1, 0]`; the hinge uses 0 at the kink.
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            LossModel::Hinge => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossModel::SmoothedHinge { gamma } => {
                if z >= 1.0 {
                    0.0
                } else if z >= 1.0 - gamma {
                    -(1.0 - z) / gamma
                } else {
                    -1.0
                }
            }
        }
    }

    /// `ℓ*(α)`; `None` outside `[−1, 0]` where the conjugate is infinite.
    pub fn conjugate(&self, alpha: f64) -> Option<f64> {
        if !(-1.0..=0.0).contains(&alpha) {
            return None;
        }
        Some(match *self {
            LossModel::Hinge => alpha,
            LossModel::SmoothedHinge { gamma } => alpha + 0.5 * gamma * alpha * alpha,
        })
    }

    /// Strong-convexity modulus of `ℓ*` on its domain (0 for the hinge).
    pub fn conjugate_curvature(&self) -> f64 {
        match *self {
            LossModel::Hinge => 0.0,
            LossModel::SmoothedHinge { gamma } => gamma,
        }
    }

    /// Lipschitz constant of `ℓ'`, if finite.
    pub fn gradient_lipschitz(&self) -> Option<f64> {
        match *self {
            LossModel::Hinge => None,
            LossModel::SmoothedHinge { gamma } => Some(1.0 / gamma),
        }
    }

    /// Maximizer over `[−1, 0]` of `−ℓ*(a) − (g a² + 2 c a) / (2λN)`.
    fn coordinate_maximizer(&self, c: f64, g: f64, lambda_n: f64) -> f64 {
        let g = g.max(0.0);
        let curvature = self.conjugate_curvature() * lambda_n + g;
        if curvature > 0.0 {
            (-(lambda_n + c) / curvature).clamp(-1.0, 0.0)
        } else if -(1.0 + c / lambda_n) < 0.0 {
            // objective is linear in a with slope −(1 + c/(λN)); ties go to 0
            -1.0
        } else {
            0.0
        }
    }
}

/// Mutable state of a dual solve.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub alpha: Vec<f64>,
    /// `Σ_t α_t A_t` in the cache's space.
    pub s: DMatrix<f64>,
    pub lambda: f64,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
}

impl SolverState {
    pub fn new(n_triplets: usize, space_dim: usize, lambda: f64, seed: u64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            alpha: vec![0.0; n_triplets],
            s: DMatrix::zeros(space_dim, space_dim),
            lambda,
            epoch: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `λN`, the scale linking `S` to the metric.
    pub fn lambda_n(&self) -> f64 {
        self.lambda * self.alpha.len() as f64
    }

    /// The metric in the cache's space, `−S/(λN)`.
    pub fn metric(&self) -> DMatrix<f64> {
        -&self.s / self.lambda_n()
    }

    /// Rebuilds `S` from `α` and returns the relative Frobenius drift of the
    /// maintained copy.
    pub fn refresh(&mut self, cache: &TripletCache) -> Result<f64> {
        let fresh = accumulate(cache, &self.alpha, Backend::default())?;
        let scale = fresh.norm().max(f64::MIN_POSITIVE);
        let drift = (&fresh - &self.s).norm() / scale;
        self.s = fresh;
        Ok(if drift.is_finite() { drift } else { 0.0 })
    }

    fn check_feasible(&self) -> Result<()> {
        match self.alpha.iter().position(|a| !(-1.0..=0.0).contains(a)) {
            Some(index) => Err(DmlError::InfeasibleDual { index, value: self.alpha[index] }),
            None => Ok(()),
        }
    }

    fn check_shape(&self, view: &GramView<'_>) -> Result<()> {
        check_dim(view.len(), self.alpha.len())?;
        check_dim(view.cache().space_dim(), self.s.nrows())
    }
}

/// `−Σ ℓ*(α_t) − ‖S‖_F² / (2λN)`, using `αᵀGα = ‖S‖_F²`.
pub fn dual_objective(state: &SolverState, view: &GramView<'_>, loss: &LossModel) -> Result<f64> {
    state.check_shape(view)?;
    state.check_feasible()?;
    let conj: f64 = state.alpha.iter().map(|&a| loss.conjugate(a).unwrap()).sum();
    Ok(-conj - state.s.norm_squared() / (2.0 * state.lambda_n()))
}

/// Primal value at `M = −S/(λN)`: `λ/2 ‖M‖² + mean ℓ(⟨M, A_t⟩)`.
pub fn primal_objective(state: &SolverState, view: &GramView<'_>, loss: &LossModel) -> Result<f64> {
    state.check_shape(view)?;
    let lambda_n = state.lambda_n();
    let n = state.alpha.len();
    if n == 0 {
        return Ok(0.0);
    }
    let margins = inner_with_constraints(view.cache(), &state.s, Backend::default())?;
    let mean_loss = margins.iter().map(|&m| loss.value(-m / lambda_n)).sum::<f64>() / n as f64;
    Ok(0.5 * state.lambda * state.s.norm_squared() / (lambda_n * lambda_n) + mean_loss)
}

/// `P(M) − D(α)/N`; nonnegative up to roundoff for feasible `α`.
pub fn duality_gap(state: &SolverState, view: &GramView<'_>, loss: &LossModel) -> Result<f64> {
    let n = state.alpha.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(primal_objective(state, view, loss)? - dual_objective(state, view, loss)? / n as f64)
}

/// Exact maximization of the dual over coordinate `t`.
pub fn sdca_update(state: &mut SolverState, view: &GramView<'_>, loss: &LossModel, t: usize) {
    let cache = view.cache();
    let (u, v) = (cache.u(t), cache.v(t));
    let g = view.diag()[t];
    let margin = quad_form(&state.s, u) - quad_form(&state.s, v);
    let old = state.alpha[t];
    let c = margin - old * g;
    let new = loss.coordinate_maximizer(c, g, state.lambda_n());
    let delta = new - old;
    if delta != 0.0 {
        state.alpha[t] = new;
        rank_two_update(&mut state.s, delta, u, v);
    }
}

/// `S += δ (u uᵀ − v vᵀ)`.
fn rank_two_update(s: &mut DMatrix<f64>, delta: f64, u: &[f64], v: &[f64]) {
    let p = u.len();
    let data = s.as_mut_slice();
    for c in 0..p {
        let (uc, vc) = (delta * u[c], delta * v[c]);
        if uc == 0.0 && vc == 0.0 {
            continue;
        }
        let col = &mut data[c * p..(c + 1) * p];
        for ((x, ur), vr) in col.iter_mut().zip(u).zip(v) {
            *x += ur * uc - vr * vc;
        }
    }
}

/// One epoch of stochastic subgradient descent on the primal, visiting
/// triplets in `order` with step `1/(λk)` at the `k`-th visit.
///
/// With this schedule the iterate after `k` visits is exactly
/// `−(1/(λk)) Σ_{s≤k} ℓ'(z_s) A_s`, so each visit records
/// `α_t = ℓ'(⟨M, A_t⟩)` and the final iterate equals `−S/(λN)`.
pub fn sgd_epoch(state: &mut SolverState, view: &GramView<'_>, loss: &LossModel, order: &[usize]) -> Result<()> {
    state.check_shape(view)?;
    let n = state.alpha.len();
    if state.alpha.iter().any(|&a| a != 0.0) || state.s.iter().any(|&x| x != 0.0) {
        return Err(invalid("SGD warm start needs a fresh state (alpha = 0)"));
    }
    check_dim(n, order.len())?;
    let mut seen = vec![false; n];
    for &t in order {
        if t >= n || std::mem::replace(&mut seen[t], true) {
            return Err(invalid("SGD order must be a permutation of the triplets"));
        }
    }
    let cache = view.cache();
    for (k, &t) in order.iter().enumerate() {
        let (u, v) = (cache.u(t), cache.v(t));
        let z = if k == 0 {
            0.0
        } else {
            -(quad_form(&state.s, u) - quad_form(&state.s, v)) / (state.lambda * k as f64)
        };
        let a = loss.derivative(z);
        if a != 0.0 {
            state.alpha[t] = a;
            rank_two_update(&mut state.s, a, u, v);
        }
    }
    state.refresh(cache)?;
    state.epoch += 1;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub trace: Vec<EpochRecord>,
    /// Final `S = Σ α_t A_t` in the solve space.
    pub accumulator: DMatrix<f64>,
    pub lambda: f64,
    /// Largest relative drift between the maintained and rebuilt `S`.
    pub max_drift: f64,
}

impl DualSolution {
    pub fn lambda_n(&self) -> f64 {
        self.lambda * self.alpha.len() as f64
    }

    /// CSV `epoch,dual_objective,duality_gap,seconds`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,dual_objective,duality_gap,seconds")?;
        for r in &self.trace {
            writeln!(out, "{},{:e},{:e},{:.6}", r.epoch, r.dual_objective, r.duality_gap, r.seconds)?;
        }
        Ok(())
    }
}

/// How long a solve runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveControl {
    /// Total epochs including the SGD warm start.
    pub max_epochs: usize,
    /// Stop after the first epoch whose duality gap is at most this.
    pub gap_tol: Option<f64>,
}

/// SGD warm start plus `epochs − 1` SDCA passes, each over a fresh permutation.
pub fn csdca_solve(cache: &TripletCache, loss: &LossModel, lambda: f64, epochs: usize, seed: u64) -> Result<DualSolution> {
    csdca_solve_until(cache, loss, lambda, SolveControl { max_epochs: epochs, gap_tol: None }, seed)
}

pub fn csdca_solve_until(
    cache: &TripletCache,
    loss: &LossModel,
    lambda: f64,
    control: SolveControl,
    seed: u64,
) -> Result<DualSolution> {
    if control.max_epochs == 0 {
        return Err(invalid("csdca needs at least one epoch"));
    }
    let view = GramView::new(cache);
    let n = cache.len();
    let mut state = SolverState::new(n, cache.space_dim(), lambda, seed)?;
    let mut trace = Vec::with_capacity(control.max_epochs);
    let mut max_drift = 0.0f64;
    let start = Instant::now();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=control.max_epochs {
        order.shuffle(&mut state.rng);
        if epoch == 1 {
            sgd_epoch(&mut state, &view, loss, &order)?;
        } else {
            for &t in &order {
                sdca_update(&mut state, &view, loss, t);
            }
            max_drift = max_drift.max(state.refresh(cache)?);
            state.epoch += 1;
        }
        let dual = dual_objective(&state, &view, loss)?;
        let gap = duality_gap(&state, &view, loss)?;
        trace.push(EpochRecord {
            epoch,
            dual_objective: dual,
            duality_gap: gap,
            seconds: start.elapsed().as_secs_f64(),
        });
        if control.gap_tol.is_some_and(|tol| gap <= tol) {
            break;
        }
    }
    let last = *trace.last().expect("at least one epoch");
    Ok(DualSolution {
        alpha: state.alpha,
        objective: last.dual_objective,
        gap: last.duality_gap,
        trace,
        accumulator: state.s,
        lambda,
        max_drift,
    })
}

/// Result of a dense reference solve.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dual value, primal value (averaged scale) from a dense Gram matrix.
pub fn dense_objectives(gram: &DMatrix<f64>, loss: &LossModel, lambda: f64, alpha: &[f64]) -> Result<(f64, f64)> {
    check_dim(gram.nrows(), alpha.len())?;
    let n = alpha.len();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let lambda_n = lambda * n as f64;
    let a = nalgebra::DVector::from_column_slice(alpha);
    let ga = gram * &a;
    let quad = a.dot(&ga);
    let mut conj = 0.0;
    for (index, &x) in alpha.iter().enumerate() {
        conj += loss.conjugate(x).ok_or(DmlError::InfeasibleDual { index, value: x })?;
    }
    let dual = -conj - quad / (2.0 * lambda_n);
    let mean_loss = ga.iter().map(|&g| loss.value(-g / lambda_n)).sum::<f64>() / n as f64;
    let primal = 0.5 * lambda * quad / (lambda_n * lambda_n) + mean_loss;
    Ok((dual, primal))
}

/// Dense projected gradient ascent on the dual with step `1/L`, where
/// `L = ‖G‖₂/(λN) + γ` and `‖G‖₂` comes from power iteration. Uses Nesterov
/// extrapolation with a restart whenever the objective drops. Stops when the
/// duality gap is at most `gap_tol`.
pub fn dense_oracle_solve(
    gram: &DMatrix<f64>,
    loss: &LossModel,
    lambda: f64,
    gap_tol: f64,
    max_iter: usize,
) -> Result<DenseSolution> {
    let sol = dense_oracle_run(gram, loss, lambda, gap_tol, max_iter)?;
    if sol.converged {
        Ok(sol)
    } else {
        Err(DmlError::OracleNotConverged { gap: sol.gap, tol: gap_tol })
    }
}

/// As [`dense_oracle_solve`] but returns the best iterate even when the
/// gap target is missed.
pub fn dense_oracle_run(
    gram: &DMatrix<f64>,
    loss: &LossModel,
    lambda: f64,
    gap_tol: f64,
    max_iter: usize,
) -> Result<DenseSolution> {
    let n = gram.nrows();
    if n == 0 {
        return Ok(DenseSolution { alpha: vec![], objective: 0.0, gap: 0.0, iterations: 0, converged: true });
    }
    let lambda_n = lambda * n as f64;
    let curvature = loss.conjugate_curvature();
    let lip = 1.001 * power_iteration(gram, 1e-10, 10_000) / lambda_n + curvature;
    let step = 1.0 / lip.max(f64::MIN_POSITIVE);

    let grad = |a: &nalgebra::DVector<f64>| -> nalgebra::DVector<f64> {
        let ga = gram * a;
        nalgebra::DVector::from_fn(n, |i, _| -1.0 - curvature * a[i] - ga[i] / lambda_n)
    };
    let mut x = nalgebra::DVector::<f64>::zeros(n);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut best = dense_objectives(gram, loss, lambda, x.as_slice())?.0;
    let mut last_gap = f64::INFINITY;

    for it in 1..=max_iter {
        let g = grad(&y);
        let next = (&y + g * step).map(|v| v.clamp(-1.0, 0.0));
        let (dual, primal) = dense_objectives(gram, loss, lambda, next.as_slice())?;
        if dual < best {
            // restart from the last accepted point with a plain step
            momentum = 1.0;
            y = x.clone();
            continue;
        }
        best = dual;
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + (&next - &x) * ((momentum - 1.0) / next_momentum);
        momentum = next_momentum;
        x = next;
        last_gap = primal - dual / n as f64;
        if last_gap <= gap_tol {
            return Ok(DenseSolution { alpha: x.as_slice().to_vec(), objective: dual, gap: last_gap, iterations: it, converged: true });
        }
    }
    Ok(DenseSolution { alpha: x.as_slice().to_vec(), objective: best, gap: last_gap, iterations: max_iter, converged: false })
}
