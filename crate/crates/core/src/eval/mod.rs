//! Scoring, the Mann–Whitney comparison, the cross-validated ridge baseline
//! and the repetition benchmark.

mod benchmark;
mod mann_whitney;
mod ridge_cv;

pub use benchmark::{
    derive_seed, run_benchmark, BenchmarkConfig, BenchmarkReport, DataSource, Method, MethodScore, TIMING_KEYS,
};
pub use mann_whitney::{mann_whitney, mann_whitney_exact, mann_whitney_normal, MannWhitney, PValueMethod, EXACT_MAX_SIZE};
pub use ridge_cv::{default_lambda_grid, ols_fit, ridge_cv_baseline, RidgeCvFit};

use crate::error::{Error, Result};
use crate::linalg::{mean, rms};
use crate::scalar::Scalar;

fn check_pair<F: Scalar>(y_test: &[F], y_pred: &[F]) -> Result<F> {
    if y_test.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            context: "r2 predictions",
            expected: y_test.len(),
            got: y_pred.len(),
        });
    }
    if y_test.is_empty() {
        return Err(Error::InvalidInput("r2 of an empty sample".into()));
    }
    let m = mean(y_test);
    let spread: Vec<F> = y_test.iter().map(|&v| v - m).collect();
    let denom = rms(&spread);
    if !(denom > F::zero()) {
        return Err(Error::Degenerate("test response is constant".into()));
    }
    Ok(denom)
}

/// `1 − ‖Y − Ŷ‖ / ‖Y − Ȳ‖` with the RMS norm; note the norms are not squared.
pub fn r2_score<F: Scalar>(y_test: &[F], y_pred: &[F]) -> Result<F> {
    let denom = check_pair(y_test, y_pred)?;
    let resid: Vec<F> = y_test.iter().zip(y_pred).map(|(&a, &b)| a - b).collect();
    Ok(F::one() - rms(&resid) / denom)
}

/// The usual coefficient of determination `1 − SSE / SST`.
pub fn r2_conventional<F: Scalar>(y_test: &[F], y_pred: &[F]) -> Result<F> {
    let denom = check_pair(y_test, y_pred)?;
    let resid: Vec<F> = y_test.iter().zip(y_pred).map(|(&a, &b)| a - b).collect();
    let ratio = rms(&resid) / denom;
    Ok(F::one() - ratio * ratio)
}
