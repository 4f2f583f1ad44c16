//! Centering and RMS-rescaling of the design and the response.
//!
//! Scales are population standard deviations (divide by `n`) so that a
//! standardized response has RMS norm exactly one. The intercept is carried
//! by the means; no intercept column is ever added to the design.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{mean, rms, Matrix, Vector};
use crate::scalar::Scalar;

/// Everything needed to map coefficients and predictions back to raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationMeta<F> {
    pub x_means: Vector<F>,
    /// All ones when column scaling is disabled.
    pub x_scales: Vector<F>,
    pub y_mean: F,
    pub y_scale: F,
}

impl<F: Scalar> StandardizationMeta<F> {
    /// Meta of a transform that does nothing.
    pub fn identity(p: usize) -> Self {
        Self {
            x_means: vec![F::zero(); p],
            x_scales: vec![F::one(); p],
            y_mean: F::zero(),
            y_scale: F::one(),
        }
    }

    pub fn transform_x(&self, x: &Matrix<F>) -> Result<Matrix<F>> {
        if x.cols() != self.x_means.len() {
            return Err(Error::DimensionMismatch {
                context: "standardization columns",
                expected: self.x_means.len(),
                got: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                out.set(i, j, (x.get(i, j) - self.x_means[j]) / self.x_scales[j]);
            }
        }
        Ok(out)
    }

    pub fn transform_y(&self, y: &[F]) -> Vector<F> {
        y.iter().map(|&v| (v - self.y_mean) / self.y_scale).collect()
    }

    pub fn restore_y(&self, y: &[F]) -> Vector<F> {
        y.iter().map(|&v| v * self.y_scale + self.y_mean).collect()
    }
}

fn center_scale<F: Scalar>(v: &[F], what: impl FnOnce() -> String) -> Result<(F, F)> {
    let m = mean(v);
    let centered: Vec<F> = v.iter().map(|&x| x - m).collect();
    let s = rms(&centered);
    let floor = F::epsilon() * F::of(1e4) * m.abs().max(F::one());
    if !(s > floor) {
        return Err(Error::Degenerate(format!("{} is constant", what())));
    }
    Ok((m, s))
}

/// Standardizes both the design columns and the response.
pub fn standardize<F: Scalar>(data: &Dataset<F>) -> Result<(Dataset<F>, StandardizationMeta<F>)> {
    standardize_with(data, true)
}

/// Like [`standardize`]; with `scale_x = false` the design is only centered.
pub fn standardize_with<F: Scalar>(
    data: &Dataset<F>,
    scale_x: bool,
) -> Result<(Dataset<F>, StandardizationMeta<F>)> {
    let (n, p) = (data.x.rows(), data.x.cols());
    if n < 2 {
        return Err(Error::Degenerate(format!("need at least 2 rows, got {n}")));
    }
    let mut x_means = Vec::with_capacity(p);
    let mut x_scales = Vec::with_capacity(p);
    for j in 0..p {
        let col = data.x.column(j);
        let (m, s) = center_scale(&col, || format!("column {}", data.feature_label(j)))?;
        x_means.push(m);
        x_scales.push(if scale_x { s } else { F::one() });
    }
    let (y_mean, y_scale) = center_scale(&data.y, || "response".to_string())?;
    let meta = StandardizationMeta {
        x_means,
        x_scales,
        y_mean,
        y_scale,
    };
    let out = Dataset {
        x: meta.transform_x(&data.x)?,
        y: meta.transform_y(&data.y),
        name: data.name.clone(),
        feature_names: data.feature_names.clone(),
    };
    Ok((out, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    fn ds(x: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset<f64> {
        Dataset::new(Matrix::from_rows(&x).unwrap(), y, "t").unwrap()
    }

    #[test]
    fn response_example() {
        let d = ds(vec![vec![0.0], vec![1.0]], vec![1.0, 3.0]);
        let (s, meta) = standardize(&d).unwrap();
        assert_eq!(s.y, vec![-1.0, 1.0]);
        assert_eq!((meta.y_mean, meta.y_scale), (2.0, 1.0));
    }

    #[test]
    fn idempotent_on_standardized_response() {
        let d = ds(vec![vec![0.0], vec![1.0], vec![5.0], vec![2.0]], vec![-1.0, 1.0, -1.0, 1.0]);
        let (s, meta) = standardize(&d).unwrap();
        assert!(meta.y_mean.abs() < 1e-15 && (meta.y_scale - 1.0).abs() < 1e-15);
        for (a, b) in s.y.iter().zip(&d.y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_column_is_rejected_by_name() {
        let mut d = ds(vec![vec![1.0, 7.0], vec![2.0, 7.0], vec![4.0, 7.0]], vec![1.0, 2.0, 0.0]);
        d.feature_names = Some(vec!["a".into(), "flat".into()]);
        match standardize(&d) {
            Err(Error::Degenerate(msg)) => assert!(msg.contains("flat"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let d = ds(vec![vec![1.0], vec![2.0]], vec![3.0, 3.0]);
        assert!(matches!(standardize(&d), Err(Error::Degenerate(_))));
    }

    #[test]
    fn standardized_moments() {
        let d = ds(
            vec![vec![1.0, 10.0], vec![2.0, -3.0], vec![4.0, 8.0], vec![-2.0, 0.5], vec![9.0, 1.0]],
            vec![3.0, 1.0, 4.0, 1.0, 5.0],
        );
        let (s, meta) = standardize(&d).unwrap();
        assert!((norm2(&s.y).unwrap() - 1.0).abs() < 1e-12);
        assert!(mean(&s.y).abs() < 1e-12);
        for j in 0..2 {
            let c = s.x.column(j);
            assert!(mean(&c).abs() < 1e-12);
            assert!((norm2(&c).unwrap() - 1.0).abs() < 1e-12);
        }
        let back = meta.restore_y(&s.y);
        for (a, b) in back.iter().zip(&d.y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unscaled_design_is_only_centered() {
        let d = ds(vec![vec![1.0], vec![3.0], vec![5.0]], vec![1.0, 0.0, 2.0]);
        let (s, meta) = standardize_with(&d, false).unwrap();
        assert_eq!(meta.x_scales, vec![1.0]);
        assert_eq!(s.x.column(0), vec![-2.0, 0.0, 2.0]);
    }
}
