//! Projection matrices `R ∈ R^{d×m}` and their application `x ↦ Rᵀx`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::PcaBasis;
use crate::error::{check_dim, invalid, Result};
use crate::par::{self, Backend};

/// Generator used for every seeded random stream in the crate. Normal variates
/// come from the ziggurat sampler of `rand_distr::StandardNormal`.
pub const GENERATOR_NAME: &str = "ChaCha8Rng (rand_chacha 0.9) + rand_distr::StandardNormal (ziggurat)";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionKind {
    Gaussian { seed: u64 },
    Pca,
    Identity,
}

#[derive(Clone, Debug)]
pub struct ProjectionMatrix {
    entries: DMatrix<f64>,
    kind: ProjectionKind,
}

impl ProjectionMatrix {
    /// Entries i.i.d. `N(0, 1/m)`, drawn in column-major order from a
    /// ChaCha8 stream seeded with `seed`.
    pub fn gaussian(d: usize, m: usize, seed: u64) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(invalid(format!("projection needs d ≥ 1 and m ≥ 1 (got d={d}, m={m})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (1.0 / m as f64).sqrt();
        let data: Vec<f64> = (0..d * m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Ok(Self {
            entries: DMatrix::from_vec(d, m, data),
            kind: ProjectionKind::Gaussian { seed },
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            entries: DMatrix::identity(d, d),
            kind: ProjectionKind::Identity,
        }
    }

    pub fn from_pca(pca: &PcaBasis) -> Self {
        Self {
            entries: pca.basis.clone(),
            kind: ProjectionKind::Pca,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    /// Original dimension `d`.
    pub fn input_dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Projected dimension `m`.
    pub fn output_dim(&self) -> usize {
        self.entries.ncols()
    }

    /// `Rᵀ X` for a `d × n` matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.apply_with(x, Backend::default())
    }

    pub fn apply_with(&self, x: &DMatrix<f64>, backend: Backend) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim(), x.nrows())?;
        let (m, n) = (self.output_dim(), x.ncols());
        let mut out = DMatrix::zeros(m, n);
        let ranges = par::blocks(n, par::BLOCK);
        let pieces = backend.map(ranges.len(), |b| {
            let r = ranges[b].clone();
            self.entries.tr_mul(&x.columns(r.start, r.len()))
        });
        for (r, piece) in ranges.iter().zip(pieces) {
            out.columns_mut(r.start, r.len()).copy_from(&piece);
        }
        Ok(out)
    }
}

/// `Rᵀ X`.
pub fn project_points(x: &DMatrix<f64>, r: &ProjectionMatrix) -> Result<DMatrix<f64>> {
    r.apply(x)
}
