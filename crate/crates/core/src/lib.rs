//! Regularized linear regression tuned by a permutation-augmented risk.
//!
//! The criterion adds to the empirical RMS risk the mean gap between one and
//! the risk refitted on label-permuted responses, so that a procedure which
//! finds structure in noise is penalized. Minimizing it with ADAM tunes the
//! regularization parameters on the training set alone; no validation split
//! is needed.
//!
//! The numerical core is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix the precision used by the CLI and the benchmark harness.

// `!(x > 0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod criterion;
pub mod data;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod linalg;
pub mod optimizer;
pub mod scalar;
pub mod standardize;

pub use criterion::{bkks_value, criterion_gradient, erg_value, make_permutations, Criterion, CriterionSpec, GuardPolicy, PermutationSet};
pub use data::{generate_scenario, load_csv, split, Dataset, Scenario, ScenarioConfig};
pub use error::{Error, Result};
pub use estimators::{beta_aggregated, beta_ridge, beta_sparse, predict, sparsifier, Family, GateSpread, RegParams, ThetaGrad};
pub use eval::{mann_whitney, r2_score, ridge_cv_baseline, run_benchmark, BenchmarkConfig, BenchmarkReport, Method};
pub use linalg::{norm2, ridge_solve, Matrix, Vector};
pub use optimizer::{adam_step, perturb_retry, train, AdamConfig, FitResult, StopRule, TrainOptions};
pub use scalar::Scalar;
pub use standardize::{standardize, StandardizationMeta};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type RegParams64 = RegParams<f64>;
pub type RegParams32 = RegParams<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
pub type CriterionSpec64 = CriterionSpec<f64>;
pub type StandardizationMeta64 = StandardizationMeta<f64>;
