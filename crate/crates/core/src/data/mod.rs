//! Datasets, synthetic scenario generation, CSV ingestion and splitting.

mod csv_io;
mod scenario;

pub use csv_io::{load_csv, write_csv};
pub use scenario::{generate_scenario, Scenario, ScenarioConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

/// A design matrix with its response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<F> {
    pub x: Matrix<F>,
    pub y: Vector<F>,
    pub name: String,
    pub feature_names: Option<Vec<String>>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(x: Matrix<F>, y: Vector<F>, name: impl Into<String>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset response",
                expected: x.rows(),
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite response value".into()));
        }
        Ok(Self {
            x,
            y,
            name: name.into(),
            feature_names: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn feature_label(&self, j: usize) -> String {
        match &self.feature_names {
            Some(names) => format!("{j} ('{}')", names[j]),
            None => j.to_string(),
        }
    }

    /// Rows `idx`, in order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn cast<G: Scalar>(&self) -> Dataset<G> {
        Dataset {
            x: self.x.map(|v| G::of(v.as_f64())),
            y: self.y.iter().map(|v| G::of(v.as_f64())).collect(),
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Random train/test partition; the test part gets `round(n · test_fraction)` rows.
pub fn split<F: Scalar>(data: &Dataset<F>, test_fraction: f64, seed: u64) -> Result<(Dataset<F>, Dataset<F>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.n();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test < 2 || n - n_test < 2 {
        return Err(Error::InvalidInput(format!(
            "split of {n} rows at {test_fraction} leaves fewer than 2 rows on one side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = idx.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((data.subset(&train_idx), data.subset(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn numbered(n: usize) -> Dataset<f64> {
        let x = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(x, (0..n).map(|i| i as f64).collect(), "seq").unwrap()
    }

    #[test]
    fn split_examples() {
        let (tr, te) = split(&numbered(10), 0.2, 3).unwrap();
        assert_eq!((tr.n(), te.n()), (8, 2));
        let (tr2, te2) = split(&numbered(10), 0.2, 3).unwrap();
        assert_eq!((tr.y.clone(), te.y.clone()), (tr2.y, te2.y));
        let (tr, te) = split(&numbered(4), 0.5, 0).unwrap();
        assert_eq!((tr.n(), te.n()), (2, 2));
    }

    #[test]
    fn split_rejects_tiny_parts() {
        assert!(split(&numbered(5), 0.1, 0).is_err());
        assert!(split(&numbered(10), 0.0, 0).is_err());
        assert!(split(&numbered(10), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 4usize..200, frac in 0.05..0.95_f64, seed in any::<u64>()) {
            let d = numbered(n);
            if let Ok((tr, te)) = split(&d, frac, seed) {
                let mut all: Vec<usize> = tr.y.iter().chain(&te.y).map(|&v| v as usize).collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(te.n(), (n as f64 * frac).round() as usize);
            }
        }
    }
}
