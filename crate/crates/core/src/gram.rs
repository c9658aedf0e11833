//! Implicit access to the triplet Gram matrix `G_ab = ⟨A_a, A_b⟩`.
//!
//! With `A_t = u_t u_tᵀ − v_t v_tᵀ`,
//!
//! ```text
//! G_ab = (u_aᵀu_b)² + (v_aᵀv_b)² − (u_aᵀv_b)² − (v_aᵀu_b)²
//! ```
//!
//! so a single entry costs `O(p)`. Products `G·α` go through the `p × p`
//! accumulator `S = Σ α_t A_t`, since `(Gα)_t = ⟨S, A_t⟩`. The same code serves
//! the original-space `G` and the projected `Ĝ`: only the cache differs.

use nalgebra::DMatrix;

use crate::error::{check_dim, invalid, Result};
use crate::linalg::{dot, quad_form};
use crate::par::{self, Backend};
use crate::triplets::TripletCache;

/// Largest space dimension accepted by the Kronecker oracle.
pub const KRONECKER_MAX_DIM: usize = 256;

/// A triplet cache together with its precomputed Gram diagonal.
#[derive(Clone, Debug)]
pub struct GramView<'a> {
    cache: &'a TripletCache,
    diag: Vec<f64>,
}

impl<'a> GramView<'a> {
    pub fn new(cache: &'a TripletCache) -> Self {
        let diag = (0..cache.len())
            .map(|t| {
                let uv = dot(cache.u(t), cache.v(t));
                let (uu, vv) = (cache.uu_norms()[t], cache.vv_norms()[t]);
                uu * uu + vv * vv - 2.0 * uv * uv
            })
            .collect();
        Self { cache, diag }
    }

    pub fn cache(&self) -> &'a TripletCache {
        self.cache
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }
}

/// `G_ab` from the four inner products.
#[inline]
pub fn gram_entry(view: &GramView<'_>, a: usize, b: usize) -> f64 {
    let c = view.cache;
    let (ua, va, ub, vb) = (c.u(a), c.v(a), c.u(b), c.v(b));
    let uu = dot(ua, ub);
    let vv = dot(va, vb);
    let uv = dot(ua, vb);
    let vu = dot(va, ub);
    uu * uu + vv * vv - uv * uv - vu * vu
}

/// `G_ab = ⟨z_a, z_b⟩` with explicit `z_t = u_t ⊗ u_t − v_t ⊗ v_t ∈ R^{p²}`.
///
/// Independent reference for [`gram_entry`]; refuses `p > 256`.
pub fn gram_oracle(view: &GramView<'_>, a: usize, b: usize) -> Result<f64> {
    let p = view.cache.space_dim();
    if p > KRONECKER_MAX_DIM {
        return Err(invalid(format!(
            "Kronecker oracle needs p ≤ {KRONECKER_MAX_DIM}, got {p}"
        )));
    }
    let z = |t: usize| -> Vec<f64> {
        let (u, v) = (view.cache.u(t), view.cache.v(t));
        let mut out = Vec::with_capacity(p * p);
        for r in 0..p {
            for s in 0..p {
                out.push(u[r] * u[s] - v[r] * v[s]);
            }
        }
        out
    };
    Ok(dot(&z(a), &z(b)))
}

/// `S = Σ_t α_t (u_t u_tᵀ − v_t v_tᵀ)`, summed per block and reduced in block order.
pub fn accumulate(cache: &TripletCache, alpha: &[f64], backend: Backend) -> Result<DMatrix<f64>> {
    check_dim(cache.len(), alpha.len())?;
    let p = cache.space_dim();
    let (u, v) = (cache.u_matrix(), cache.v_matrix());
    let s = backend
        .block_reduce(
            cache.len(),
            par::BLOCK,
            |r| {
                let ur = u.columns(r.start, r.len());
                let vr = v.columns(r.start, r.len());
                let mut su = ur.clone_owned();
                let mut sv = vr.clone_owned();
                for (c, &a) in alpha[r].iter().enumerate() {
                    su.column_mut(c).scale_mut(a);
                    sv.column_mut(c).scale_mut(a);
                }
                let mut part = su * ur.transpose();
                part -= sv * vr.transpose();
                part
            },
            |a, b| a + b,
        )
        .unwrap_or_else(|| DMatrix::zeros(p, p));
    Ok(s)
}

/// `⟨S, A_t⟩ = u_tᵀ S u_t − v_tᵀ S v_t` for every triplet.
pub fn inner_with_constraints(cache: &TripletCache, s: &DMatrix<f64>, backend: Backend) -> Result<Vec<f64>> {
    check_dim(cache.space_dim(), s.nrows())?;
    check_dim(cache.space_dim(), s.ncols())?;
    let ranges = par::blocks(cache.len(), par::BLOCK);
    let parts = backend.map(ranges.len(), |b| {
        ranges[b]
            .clone()
            .map(|t| quad_form(s, cache.u(t)) - quad_form(s, cache.v(t)))
            .collect::<Vec<_>>()
    });
    Ok(parts.concat())
}

/// `G·α` without forming `G`; `O(N p²)`.
pub fn gram_vector_product(view: &GramView<'_>, alpha: &[f64]) -> Result<Vec<f64>> {
    gram_vector_product_with(view, alpha, Backend::default())
}

pub fn gram_vector_product_with(view: &GramView<'_>, alpha: &[f64], backend: Backend) -> Result<Vec<f64>> {
    let s = accumulate(view.cache, alpha, backend)?;
    inner_with_constraints(view.cache, &s, backend)
}

/// Full `N × N` Gram matrix from the blocked inner-product matrices
/// `UᵀU`, `VᵀV`, `UᵀV`. For dense reference solves on small `N`.
pub fn dense_gram(cache: &TripletCache) -> DMatrix<f64> {
    let (u, v) = (cache.u_matrix(), cache.v_matrix());
    let uu = u.tr_mul(u);
    let vv = v.tr_mul(v);
    let uv = u.tr_mul(v);
    let n = cache.len();
    DMatrix::from_fn(n, n, |a, b| {
        uu[(a, b)].powi(2) + vv[(a, b)].powi(2) - uv[(a, b)].powi(2) - uv[(b, a)].powi(2)
    })
}

/// The κ statistic and the spectral norms it is the maximum of.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaStats {
    pub kappa: f64,
    /// `‖M¹‖₂, ‖M²‖₂, ‖M³‖₂, ‖M⁴‖₂`.
    pub norms: [f64; 4],
}

/// κ from the rank-one structure of the norm-product matrices.
///
/// With `p_a = ‖u_a‖²` and `q_a = ‖v_a‖²` the four matrices are `ppᵀ`, `qqᵀ`,
/// `pqᵀ` and `qpᵀ`, whose spectral norms are `‖p‖²`, `‖q‖²`, `‖p‖‖q‖`, `‖p‖‖q‖`.
pub fn kappa(cache: &TripletCache) -> KappaStats {
    let p = cache.uu_norms();
    let q = cache.vv_norms();
    let pp = dot(p, p);
    let qq = dot(q, q);
    let pq = pp.sqrt() * qq.sqrt();
    let norms = [pp, qq, pq, pq];
    let kappa = norms.iter().copied().fold(0.0, f64::max);
    KappaStats { kappa, norms }
}
