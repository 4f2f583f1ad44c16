use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::beta_ridge;
use crate::linalg::{ridge_solve, rms, Vector};
use crate::scalar::Scalar;
use crate::standardize::{standardize, StandardizationMeta};

/// 25 points log-spaced over `[1e-4, 1e4]`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..25).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 24.0)).collect()
}

#[derive(Debug, Clone)]
pub struct RidgeCvFit<F> {
    pub lambda: f64,
    /// Coefficients on the standardized scale.
    pub beta: Vector<F>,
    pub meta: StandardizationMeta<F>,
    /// Mean validation RMS error per grid point, in grid order.
    pub cv_errors: Vec<f64>,
}

/// k-fold cross-validated ridge. Data are standardized once; folds are a
/// seeded shuffle dealt round-robin. The λ with the smallest mean
/// validation RMS error (first on ties) is refitted on all rows.
pub fn ridge_cv_baseline<F: Scalar>(train: &Dataset<F>, folds: usize, grid: &[f64], seed: u64) -> Result<RidgeCvFit<F>> {
    if folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {folds}")));
    }
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidInput("lambda grid must be non-empty and positive".into()));
    }
    let (data, meta) = standardize(train)?;
    let n = data.n();
    if n < folds {
        return Err(Error::InvalidInput(format!("{folds} folds leave an empty fold with {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; n];
        for (k, &i) in idx.iter().enumerate() {
            f[i] = k % folds;
        }
        f
    };
    let splits: Vec<(Dataset<F>, Dataset<F>)> = (0..folds)
        .map(|k| {
            let fit: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
            let val: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
            (data.subset(&fit), data.subset(&val))
        })
        .collect();

    let mut cv_errors = Vec::with_capacity(grid.len());
    for &lam in grid {
        let mut total = 0.0;
        for (fit, val) in &splits {
            let beta = beta_ridge(F::of(lam), &fit.x, &fit.y)?;
            let pred = val.x.matvec(&beta);
            let resid: Vec<F> = val.y.iter().zip(&pred).map(|(&a, &b)| a - b).collect();
            total += rms(&resid).as_f64();
        }
        cv_errors.push(total / folds as f64);
    }
    let best = cv_errors
        .iter()
        .enumerate()
        .fold(0, |b, (i, &e)| if e < cv_errors[b] { i } else { b });
    let lambda = grid[best];
    let beta = beta_ridge(F::of(lambda), &data.x, &data.y)?;
    Ok(RidgeCvFit {
        lambda,
        beta,
        meta,
        cv_errors,
    })
}

/// Unregularized least squares on standardized data.
pub fn ols_fit<F: Scalar>(train: &Dataset<F>) -> Result<(Vector<F>, StandardizationMeta<F>)> {
    let (data, meta) = standardize(train)?;
    let beta = ridge_solve(&data.x.gram(), &data.x.tr_matvec(&data.y))?;
    Ok((beta, meta))
}
