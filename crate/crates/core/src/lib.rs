//! Mahalanobis metric learning for high-dimensional data by dual random projection.
//!
//! The learner samples Euclidean-active triplet constraints, solves the dual of the
//! regularized triplet-hinge problem in a randomly projected subspace, and then
//! rebuilds the metric with the original-space difference vectors. The rebuilt
//! matrix is projected onto the PSD cone once, at the end.
//!
//! Module map:
//!
//! - [`data`]: datasets, LIBSVM ingestion, PCA and eigen-spectra
//! - [`triplets`]: active-triplet sampling and the difference-vector cache
//! - [`projection`]: Gaussian, PCA and identity projection matrices
//! - [`gram`]: implicit access to the triplet Gram matrix and the κ statistic
//! - [`solver`]: SGD warm start followed by stochastic dual coordinate ascent
//! - [`metric`]: metric recovery, subspace assembly, PSD projection, persistence
//! - [`eval`]: mAP ranking and k-NN classification scores
//! - [`experiment`]: method pipelines, run configuration and verification harnesses
//!
//! Data-parallel kernels go through [`par::Backend`]; with the `parallel` feature
//! disabled every backend runs sequentially and produces identical results.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gram;
pub mod linalg;
pub mod metric;
pub mod par;
pub mod projection;
pub mod solver;
pub mod triplets;

pub use data::{LabelMap, LabeledDataset, PcaBasis};
pub use error::{DmlError, Result};
pub use eval::EvalReport;
pub use gram::{GramView, KappaStats};
pub use metric::SymMatrix;
pub use par::Backend;
pub use projection::{ProjectionKind, ProjectionMatrix};
pub use solver::{DualSolution, LossModel, SolverState};
pub use triplets::{Triplet, TripletCache, TripletSet};
