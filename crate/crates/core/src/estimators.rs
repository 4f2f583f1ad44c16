//! Closed-form estimator families indexed by the regularization bundle θ.
//!
//! * ridge: `β^R = (XᵀX + λI)⁻¹ XᵀY`
//! * sparse ridge: `β^S = S(κ,γ) β^R(λ, X S(κ,γ), Y)` with `S` a diagonal of
//!   sigmoid gates
//! * aggregated: `β^A = σ(μ) β^R + (1 − σ(μ)) β^S`
//!
//! Besides the plain maps, [`FamilyFactors`] keeps the per-θ Cholesky factors
//! so that many responses can be fitted against the same design, and exposes
//! vector-Jacobian products of `β` with respect to θ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix, Vector};
use crate::scalar::{sigmoid, Scalar};
use crate::standardize::StandardizationMeta;

/// Offset added to the gate spread inside the sparsifier exponent.
pub const GATE_SPREAD_OFFSET: f64 = 1e-2;
/// Gates below this are reported as selected out, above `1 - GATE_SATURATION` as selected in.
pub const GATE_SATURATION: f64 = 1e-6;

/// Which estimator family a procedure trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Ridge; tunes λ. Trained as "BKK".
    #[serde(rename = "bkk")]
    Ridge,
    /// Gated ridge; tunes (λ, κ, γ). Trained as "SBKK".
    #[serde(rename = "sbkk")]
    SparseRidge,
    /// Interpolation of the two; tunes (λ, κ, γ, μ). Trained as "ABKK".
    #[serde(rename = "abkk")]
    Aggregated,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Ridge, Family::SparseRidge, Family::Aggregated];

    pub fn label(self) -> &'static str {
        match self {
            Family::Ridge => "bkk",
            Family::SparseRidge => "sbkk",
            Family::Aggregated => "abkk",
        }
    }

    pub fn uses_gates(self) -> bool {
        !matches!(self, Family::Ridge)
    }

    pub fn uses_ridge(self) -> bool {
        !matches!(self, Family::SparseRidge)
    }

    pub fn uses_mu(self) -> bool {
        matches!(self, Family::Aggregated)
    }

    /// Number of free scalar components of θ for `p` features.
    pub fn active_len(self, p: usize) -> usize {
        match self {
            Family::Ridge => 1,
            Family::SparseRidge => 2 + p,
            Family::Aggregated => 3 + p,
        }
    }

    /// Names of the active components, in [`ThetaGrad::to_flat`] order.
    pub fn component_names(self, p: usize) -> Vec<String> {
        let mut names = vec!["lambda".to_string()];
        if self.uses_gates() {
            names.push("kappa".into());
            names.extend((0..p).map(|j| format!("gamma[{j}]")));
        }
        if self.uses_mu() {
            names.push("mu".into());
        }
        names
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bkk" | "ridge" => Ok(Family::Ridge),
            "sbkk" | "sparse" | "sparse-ridge" => Ok(Family::SparseRidge),
            "abkk" | "aggregated" => Ok(Family::Aggregated),
            other => Err(Error::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

/// How the spread of γ enters the sparsifier exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateSpread {
    /// `Σ (γ_i − γ̄)²`.
    #[default]
    SumOfSquares,
    /// `(1/p) Σ (γ_i − γ̄)²`.
    Variance,
}

impl GateSpread {
    fn factor<F: Scalar>(self, p: usize) -> F {
        match self {
            GateSpread::SumOfSquares => F::one(),
            GateSpread::Variance => F::one() / F::of_usize(p),
        }
    }
}

/// The regularization bundle θ = (λ, κ, γ, μ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegParams<F> {
    pub lambda: F,
    pub kappa: F,
    pub gamma: Vector<F>,
    pub mu: F,
}

impl<F: Scalar> RegParams<F> {
    /// Default starting point: λ = 10³, κ = 0.1, γ = 0, μ = 0.
    pub fn initial(p: usize) -> Self {
        Self {
            lambda: F::of(1e3),
            kappa: F::of(0.1),
            gamma: vec![F::zero(); p],
            mu: F::zero(),
        }
    }

    pub fn ridge(lambda: F, p: usize) -> Self {
        Self {
            lambda,
            ..Self::initial(p)
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.lambda > F::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.kappa > F::zero()) || !self.kappa.is_finite() {
            return Err(Error::InvalidInput(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.gamma.len() != p {
            return Err(Error::DimensionMismatch {
                context: "gamma",
                expected: p,
                got: self.gamma.len(),
            });
        }
        if !self.mu.is_finite() || self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput("non-finite regularization parameter".into()));
        }
        Ok(())
    }

    /// Active components of θ flattened in the order of [`Family::component_names`].
    pub fn to_flat(&self, family: Family) -> Vector<F> {
        let mut out = vec![self.lambda];
        if family.uses_gates() {
            out.push(self.kappa);
            out.extend_from_slice(&self.gamma);
        }
        if family.uses_mu() {
            out.push(self.mu);
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat); inactive components are kept from `self`.
    pub fn with_flat(&self, family: Family, flat: &[F]) -> Self {
        let mut out = self.clone();
        out.lambda = flat[0];
        let mut k = 1;
        if family.uses_gates() {
            out.kappa = flat[k];
            let p = out.gamma.len();
            out.gamma.copy_from_slice(&flat[k + 1..k + 1 + p]);
            k += 1 + p;
        }
        if family.uses_mu() {
            out.mu = flat[k];
        }
        out
    }
}

/// Gradient with respect to the natural components of θ. Inactive entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrad<F> {
    pub lambda: F,
    pub kappa: F,
    pub gamma: Vector<F>,
    pub mu: F,
}

impl<F: Scalar> ThetaGrad<F> {
    pub fn zeros(p: usize) -> Self {
        Self {
            lambda: F::zero(),
            kappa: F::zero(),
            gamma: vec![F::zero(); p],
            mu: F::zero(),
        }
    }

    pub fn axpy(&mut self, a: F, other: &Self) {
        self.lambda = self.lambda + a * other.lambda;
        self.kappa = self.kappa + a * other.kappa;
        for (g, o) in self.gamma.iter_mut().zip(&other.gamma) {
            *g = *g + a * *o;
        }
        self.mu = self.mu + a * other.mu;
    }

    pub fn to_flat(&self, family: Family) -> Vector<F> {
        RegParams {
            lambda: self.lambda,
            kappa: self.kappa,
            gamma: self.gamma.clone(),
            mu: self.mu,
        }
        .to_flat(family)
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.is_finite()
            && self.kappa.is_finite()
            && self.mu.is_finite()
            && self.gamma.iter().all(|g| g.is_finite())
    }
}

fn gate_centering<F: Scalar>(gamma: &[F], spread: GateSpread) -> (Vector<F>, F) {
    let p = gamma.len();
    let mean = gamma.iter().copied().sum::<F>() / F::of_usize(p);
    let dev: Vector<F> = gamma.iter().map(|&g| g - mean).collect();
    let scale = spread.factor::<F>(p) * dot(&dev, &dev) + F::of(GATE_SPREAD_OFFSET);
    (dev, scale)
}

/// Diagonal entries of the quasi-sparsifying matrix `S(κ, γ)`.
pub fn gates<F: Scalar>(kappa: F, gamma: &[F], spread: GateSpread) -> Vector<F> {
    let (dev, scale) = gate_centering(gamma, spread);
    dev.iter().map(|&d| sigmoid(kappa * scale * d)).collect()
}

/// The quasi-sparsifying matrix `S(κ, γ)` as a `p × p` diagonal matrix.
pub fn sparsifier<F: Scalar>(kappa: F, gamma: &[F]) -> Result<Matrix<F>> {
    if !(kappa > F::zero()) || !kappa.is_finite() {
        return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
    }
    if gamma.is_empty() || gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidInput("gamma must be non-empty and finite".into()));
    }
    Ok(Matrix::from_diag(&gates(kappa, gamma, GateSpread::SumOfSquares)))
}

/// Counts of (selected out, selected in) features among saturated gates.
pub fn gate_counts<F: Scalar>(gates: &[F]) -> (usize, usize) {
    let lo = F::of(GATE_SATURATION);
    let hi = F::one() - lo;
    let out = gates.iter().filter(|&&s| s < lo).count();
    let inn = gates.iter().filter(|&&s| s > hi).count();
    (out, inn)
}

fn check_xy<F: Scalar>(x: &Matrix<F>, y: &[F]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "response length",
            expected: x.rows(),
            got: y.len(),
        });
    }
    Ok(())
}

fn check_lambda<F: Scalar>(lambda: F) -> Result<()> {
    if !(lambda > F::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Ridge estimator `(XᵀX + λI)⁻¹ XᵀY`.
pub fn beta_ridge<F: Scalar>(lambda: F, x: &Matrix<F>, y: &[F]) -> Result<Vector<F>> {
    check_xy(x, y)?;
    check_lambda(lambda)?;
    let chol = Cholesky::factor(&x.gram().add_diagonal(lambda))?;
    Ok(chol.solve(&x.tr_matvec(y)))
}

/// Sparse ridge estimator `S β^R(λ, X S, Y)`.
pub fn beta_sparse<F: Scalar>(
    lambda: F,
    kappa: F,
    gamma: &[F],
    x: &Matrix<F>,
    y: &[F],
) -> Result<Vector<F>> {
    check_xy(x, y)?;
    if gamma.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "gamma",
            expected: x.cols(),
            got: gamma.len(),
        });
    }
    let s = sparsifier(kappa, gamma)?.diagonal();
    let inner = beta_ridge(lambda, &x.scale_columns(&s), y)?;
    Ok(s.iter().zip(&inner).map(|(&a, &b)| a * b).collect())
}

/// Aggregated estimator `σ(μ) β^R + (1 − σ(μ)) β^S`.
pub fn beta_aggregated<F: Scalar>(
    lambda: F,
    kappa: F,
    gamma: &[F],
    mu: F,
    x: &Matrix<F>,
    y: &[F],
) -> Result<Vector<F>> {
    if !mu.is_finite() {
        return Err(Error::InvalidInput("mu must be finite".into()));
    }
    let r = beta_ridge(lambda, x, y)?;
    let s = beta_sparse(lambda, kappa, gamma, x, y)?;
    let a = sigmoid(mu);
    Ok(r.iter().zip(&s).map(|(&br, &bs)| a * br + (F::one() - a) * bs).collect())
}

/// Dispatches to the family's estimator.
pub fn beta_family<F: Scalar>(
    family: Family,
    theta: &RegParams<F>,
    x: &Matrix<F>,
    y: &[F],
) -> Result<Vector<F>> {
    theta.validate(x.cols())?;
    match family {
        Family::Ridge => beta_ridge(theta.lambda, x, y),
        Family::SparseRidge => beta_sparse(theta.lambda, theta.kappa, &theta.gamma, x, y),
        Family::Aggregated => {
            beta_aggregated(theta.lambda, theta.kappa, &theta.gamma, theta.mu, x, y)
        }
    }
}

/// Predictions on the raw response scale for a raw design `x`, given
/// coefficients fitted on data standardized with `meta`.
pub fn predict<F: Scalar>(beta: &[F], x: &Matrix<F>, meta: &StandardizationMeta<F>) -> Result<Vector<F>> {
    if beta.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "predict coefficients",
            expected: x.cols(),
            got: beta.len(),
        });
    }
    let xs = meta.transform_x(x)?;
    Ok(meta.restore_y(&xs.matvec(beta)))
}

/// A design matrix with its Gram matrix cached.
#[derive(Debug, Clone)]
pub struct Design<F> {
    pub x: Matrix<F>,
    pub gram: Matrix<F>,
}

impl<F: Scalar> Design<F> {
    pub fn new(x: Matrix<F>) -> Self {
        let gram = x.gram();
        Self { x, gram }
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }
}

/// Per-θ factorizations shared by every response fitted against one design.
#[derive(Debug, Clone)]
pub struct FamilyFactors<F> {
    family: Family,
    gates: Option<Vector<F>>,
    /// σ(μ) for the aggregated family, 1 for ridge, 0 for sparse ridge.
    weight: F,
    ridge: Option<Cholesky<F>>,
    sparse: Option<Cholesky<F>>,
}

/// One fitted response. Keeps the pieces the backward pass needs.
#[derive(Debug, Clone)]
pub struct FamilyFit<F> {
    xty: Vector<F>,
    ridge_beta: Option<Vector<F>>,
    /// Ridge coefficients on the gated design, before the outer gate.
    sparse_inner: Option<Vector<F>>,
    pub beta: Vector<F>,
}

impl<F: Scalar> FamilyFactors<F> {
    pub fn new(family: Family, theta: &RegParams<F>, design: &Design<F>, spread: GateSpread) -> Result<Self> {
        theta.validate(design.p())?;
        let ridge = if family.uses_ridge() {
            Some(Cholesky::factor(&design.gram.add_diagonal(theta.lambda))?)
        } else {
            None
        };
        let (gates, sparse) = if family.uses_gates() {
            let s = gates(theta.kappa, &theta.gamma, spread);
            let p = design.p();
            let mut sgs = design.gram.clone();
            for a in 0..p {
                for b in 0..p {
                    sgs.set(a, b, s[a] * design.gram.get(a, b) * s[b]);
                }
            }
            let chol = Cholesky::factor(&sgs.add_diagonal(theta.lambda))?;
            (Some(s), Some(chol))
        } else {
            (None, None)
        };
        let weight = match family {
            Family::Ridge => F::one(),
            Family::SparseRidge => F::zero(),
            Family::Aggregated => sigmoid(theta.mu),
        };
        Ok(Self {
            family,
            gates,
            weight,
            ridge,
            sparse,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn gates(&self) -> Option<&[F]> {
        self.gates.as_deref()
    }

    pub fn fit(&self, design: &Design<F>, y: &[F]) -> FamilyFit<F> {
        let xty = design.x.tr_matvec(y);
        let ridge_beta = self.ridge.as_ref().map(|c| c.solve(&xty));
        let sparse_inner = match (&self.sparse, &self.gates) {
            (Some(c), Some(s)) => Some(c.solve(&hadamard(s, &xty))),
            _ => None,
        };
        let beta = match self.family {
            Family::Ridge => ridge_beta.clone().unwrap(),
            Family::SparseRidge => hadamard(self.gates.as_ref().unwrap(), sparse_inner.as_ref().unwrap()),
            Family::Aggregated => {
                let s = self.gates.as_ref().unwrap();
                let a = self.weight;
                ridge_beta
                    .as_ref()
                    .unwrap()
                    .iter()
                    .zip(s.iter().zip(sparse_inner.as_ref().unwrap()))
                    .map(|(&br, (&sj, &bj))| a * br + (F::one() - a) * sj * bj)
                    .collect()
            }
        };
        FamilyFit {
            xty,
            ridge_beta,
            sparse_inner,
            beta,
        }
    }

    /// Pulls a cotangent `w` on `β` back to the natural components of θ:
    /// returns `∂(wᵀβ)/∂θ`.
    pub fn vjp(&self, theta: &RegParams<F>, design: &Design<F>, fit: &FamilyFit<F>, w: &[F], spread: GateSpread) -> ThetaGrad<F> {
        let p = design.p();
        let mut grad = ThetaGrad::zeros(p);
        let a = self.weight;

        if let (Some(chol), Some(br)) = (&self.ridge, &fit.ridge_beta) {
            // dβ^R/dλ = −A⁻¹β^R
            let q = chol.solve(w);
            grad.lambda = grad.lambda - a * dot(&q, br);
        }

        if let (Some(chol), Some(s), Some(b)) = (&self.sparse, &self.gates, &fit.sparse_inner) {
            let c = F::one() - a;
            let q = chol.solve(&hadamard(s, w));
            grad.lambda = grad.lambda - c * dot(&q, b);
            let gsb = design.gram.matvec(&hadamard(s, b));
            let gsq = design.gram.matvec(&hadamard(s, &q));
            let d_gates: Vector<F> = (0..p)
                .map(|j| c * (w[j] * b[j] + q[j] * fit.xty[j] - q[j] * gsb[j] - gsq[j] * b[j]))
                .collect();
            let (dk, dg) = gate_vjp(theta.kappa, &theta.gamma, s, &d_gates, spread);
            grad.kappa = dk;
            grad.gamma = dg;
        }

        if self.family.uses_mu() {
            let br = fit.ridge_beta.as_ref().unwrap();
            let s = self.gates.as_ref().unwrap();
            let b = fit.sparse_inner.as_ref().unwrap();
            let diff: F = (0..p).map(|j| w[j] * (br[j] - s[j] * b[j])).sum();
            grad.mu = a * (F::one() - a) * diff;
        }
        grad
    }
}

/// Chain rule from a gradient on the gate values to (κ, γ).
fn gate_vjp<F: Scalar>(kappa: F, gamma: &[F], gates: &[F], d_gates: &[F], spread: GateSpread) -> (F, Vector<F>) {
    let p = gamma.len();
    let (dev, scale) = gate_centering(gamma, spread);
    // gradient on the sigmoid argument z_j = κ·scale·dev_j
    let gz: Vector<F> = gates
        .iter()
        .zip(d_gates)
        .map(|(&s, &g)| g * s * (F::one() - s))
        .collect();
    let d_kappa = scale * dot(&gz, &dev);
    let gz_mean = gz.iter().copied().sum::<F>() / F::of_usize(p);
    let two_k = F::of(2.0) * spread.factor::<F>(p);
    let gz_dev = dot(&gz, &dev);
    let d_gamma = (0..p)
        .map(|k| kappa * (scale * (gz[k] - gz_mean) + two_k * dev[k] * gz_dev))
        .collect();
    (d_kappa, d_gamma)
}

fn hadamard<F: Scalar>(a: &[F], b: &[F]) -> Vector<F> {
    a.iter().zip(b).map(|(&x, &y)| x * y).collect()
}
