//! The permutation-augmented risk criterion and its exact gradient.
//!
//! For a standardized response `Y` and a fixed set of `T` label permutations,
//!
//! ```text
//! value(θ) = ‖Y − Xβ(θ, X, Y)‖ + (1/T) Σ_t | 1 − ‖π_t(Y) − Xβ(θ, X, π_t(Y))‖ |
//! ```
//!
//! where `‖·‖` is the RMS norm. Every permuted response is refitted. The
//! generic form with an arbitrary empirical-risk function is [`erg_value`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{beta_family, Design, Family, FamilyFactors, GateSpread, RegParams, ThetaGrad};
use crate::linalg::{rms, Matrix, Vector};
use crate::scalar::Scalar;

/// Allowed deviation of `‖Y‖` from one before the response counts as unstandardized.
pub const STANDARDIZED_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_GUARD_EPS: f64 = 1e-12;

/// `T` label permutations of `{0, …, n−1}`, fixed for a whole run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSet {
    n: usize,
    seed: u64,
    perms: Vec<Vec<usize>>,
}

impl PermutationSet {
    /// Wraps explicit permutations after checking each is a bijection.
    pub fn from_perms(n: usize, perms: Vec<Vec<usize>>) -> Result<Self> {
        for (t, p) in perms.iter().enumerate() {
            let mut seen = vec![false; n];
            let ok = p.len() == n
                && p.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true));
            if !ok {
                return Err(Error::InvalidInput(format!("entry {t} is not a permutation of 0..{n}")));
            }
        }
        Ok(Self { n, seed: 0, perms })
    }

    /// `count` copies of the identity permutation.
    pub fn identity(n: usize, count: usize) -> Self {
        Self {
            n,
            seed: 0,
            perms: vec![(0..n).collect(); count],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn perms(&self) -> &[Vec<usize>] {
        &self.perms
    }

    /// `π_t(y)` with `π_t(y)_i = y_{π_t(i)}`.
    pub fn apply<F: Copy>(&self, t: usize, y: &[F]) -> Vec<F> {
        self.perms[t].iter().map(|&i| y[i]).collect()
    }
}

/// `count` independent uniform permutations of `n` points from a seeded
/// Fisher–Yates shuffle.
pub fn make_permutations(n: usize, count: usize, seed: u64) -> Result<PermutationSet> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2 to permute, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms = (0..count)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    Ok(PermutationSet { n, seed, perms })
}

/// What to do when the criterion is evaluated at one of its kinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuardPolicy {
    /// Return [`Error::NonDifferentiable`]; the optimizer perturbs θ and retries.
    #[default]
    Error,
    /// Use the zero subgradient for the offending term.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSpec<F> {
    pub family: Family,
    pub perms: PermutationSet,
    pub guard_eps: F,
    pub guard: GuardPolicy,
    pub spread: GateSpread,
}

impl<F: Scalar> CriterionSpec<F> {
    pub fn new(family: Family, perms: PermutationSet) -> Self {
        Self {
            family,
            perms,
            guard_eps: F::of(DEFAULT_GUARD_EPS),
            guard: GuardPolicy::Error,
            spread: GateSpread::SumOfSquares,
        }
    }
}

/// Result of one evaluation of the criterion.
#[derive(Debug, Clone)]
pub struct Evaluation<F> {
    pub value: F,
    pub grad: Option<ThetaGrad<F>>,
    /// Coefficients fitted on the unpermuted response.
    pub beta: Vector<F>,
    pub gates: Option<Vector<F>>,
    /// Forward ridge fits performed (always `T + 1`).
    pub fits: usize,
}

/// The criterion bound to one standardized training set.
#[derive(Debug, Clone)]
pub struct Criterion<F> {
    spec: CriterionSpec<F>,
    design: Design<F>,
    y: Vector<F>,
    permuted: Vec<Vector<F>>,
    parallel: bool,
}

struct Term<F> {
    norm: F,
    fit_beta: Vector<F>,
    grad: Option<ThetaGrad<F>>,
}

impl<F: Scalar> Criterion<F> {
    pub fn new(spec: CriterionSpec<F>, x: Matrix<F>, y: Vector<F>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "criterion response",
                expected: x.rows(),
                got: y.len(),
            });
        }
        if spec.perms.n() != y.len() && !spec.perms.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "permutation size",
                expected: y.len(),
                got: spec.perms.n(),
            });
        }
        if !(spec.guard_eps > F::zero()) {
            return Err(Error::InvalidInput("guard_eps must be positive".into()));
        }
        let norm = rms(&y);
        if !norm.is_finite() || (norm - F::one()).abs().as_f64() > STANDARDIZED_TOLERANCE {
            return Err(Error::NotStandardized { norm: norm.as_f64() });
        }
        let permuted = (0..spec.perms.len()).map(|t| spec.perms.apply(t, &y)).collect();
        Ok(Self {
            spec,
            design: Design::new(x),
            y,
            permuted,
            parallel: false,
        })
    }

    /// Evaluate the permutation terms on the rayon pool. The reduction
    /// order is unchanged, so results stay bit-identical.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn spec(&self) -> &CriterionSpec<F> {
        &self.spec
    }

    pub fn design(&self) -> &Design<F> {
        &self.design
    }

    pub fn t(&self) -> usize {
        self.permuted.len()
    }

    pub fn value(&self, theta: &RegParams<F>) -> Result<F> {
        Ok(self.evaluate(theta, false)?.value)
    }

    pub fn value_and_gradient(&self, theta: &RegParams<F>) -> Result<Evaluation<F>> {
        self.evaluate(theta, true)
    }

    fn term(&self, factors: &FamilyFactors<F>, theta: &RegParams<F>, y: &[F], with_grad: bool) -> Term<F> {
        let d = &self.design;
        let fit = factors.fit(d, y);
        let pred = d.x.matvec(&fit.beta);
        let resid: Vector<F> = y.iter().zip(&pred).map(|(&a, &b)| a - b).collect();
        let norm = rms(&resid);
        let grad = (with_grad && norm > F::zero()).then(|| {
            // ∂‖r‖/∂β = −Xᵀr / (n‖r‖)
            let scale = -F::one() / (F::of_usize(d.n()) * norm);
            let cot: Vector<F> = d.x.tr_matvec(&resid).into_iter().map(|v| v * scale).collect();
            factors.vjp(theta, d, &fit, &cot, self.spec.spread)
        });
        Term {
            norm,
            fit_beta: fit.beta,
            grad,
        }
    }

    fn evaluate(&self, theta: &RegParams<F>, with_grad: bool) -> Result<Evaluation<F>> {
        let spec = &self.spec;
        let factors = FamilyFactors::new(spec.family, theta, &self.design, spec.spread)?;
        let direct = self.term(&factors, theta, &self.y, with_grad);
        let terms: Vec<Term<F>> = if self.parallel {
            self.permuted
                .par_iter()
                .map(|y| self.term(&factors, theta, y, with_grad))
                .collect()
        } else {
            self.permuted
                .iter()
                .map(|y| self.term(&factors, theta, y, with_grad))
                .collect()
        };

        let t_count = terms.len();
        let mut value = direct.norm;
        if t_count > 0 {
            let mut acc = F::zero();
            for term in &terms {
                acc = acc + (F::one() - term.norm).abs();
            }
            value = value + acc / F::of_usize(t_count);
        }
        if !value.is_finite() {
            return Err(Error::Diverged(format!("criterion value is {value}")));
        }

        let grad = if with_grad {
            let eps = spec.guard_eps;
            let p = self.design.p();
            let mut grad = ThetaGrad::zeros(p);
            match (&direct.grad, direct.norm > eps) {
                (Some(g), true) => grad.axpy(F::one(), g),
                _ => self.kink("residual of the direct fit is zero")?,
            }
            let inv_t = if t_count > 0 { F::one() / F::of_usize(t_count) } else { F::zero() };
            for (t, term) in terms.iter().enumerate() {
                let gap = F::one() - term.norm;
                if term.norm <= eps {
                    self.kink(&format!("residual of permutation {t} is zero"))?;
                    continue;
                }
                if gap.abs() <= eps {
                    self.kink(&format!("permutation {t} residual norm equals one"))?;
                    continue;
                }
                // d|1 − N| = −sign(1 − N) dN
                let sign = if gap > F::zero() { F::one() } else { -F::one() };
                if let Some(g) = &term.grad {
                    grad.axpy(-sign * inv_t, g);
                }
            }
            if !grad.is_finite() {
                return Err(Error::Diverged("non-finite criterion gradient".into()));
            }
            Some(grad)
        } else {
            None
        };

        Ok(Evaluation {
            value,
            grad,
            beta: direct.fit_beta,
            gates: factors.gates().map(<[F]>::to_vec),
            fits: t_count + 1,
        })
    }

    fn kink(&self, what: &str) -> Result<()> {
        match self.spec.guard {
            GuardPolicy::Error => Err(Error::NonDifferentiable(what.to_string())),
            GuardPolicy::Subgradient => Ok(()),
        }
    }
}

/// The criterion value for `theta` on a standardized response.
pub fn bkks_value<F: Scalar>(spec: &CriterionSpec<F>, theta: &RegParams<F>, x: &Matrix<F>, y: &[F]) -> Result<F> {
    Criterion::new(spec.clone(), x.clone(), y.to_vec())?.value(theta)
}

/// Exact gradient of [`bkks_value`] with respect to the natural components of θ.
pub fn criterion_gradient<F: Scalar>(
    spec: &CriterionSpec<F>,
    theta: &RegParams<F>,
    x: &Matrix<F>,
    y: &[F],
) -> Result<ThetaGrad<F>> {
    let eval = Criterion::new(spec.clone(), x.clone(), y.to_vec())?.value_and_gradient(theta)?;
    Ok(eval.grad.expect("gradient requested"))
}

/// Intercept-only design `(1_n | 0_{n×(p−1)})`.
pub fn intercept_design<F: Scalar>(n: usize, p: usize) -> Matrix<F> {
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        x.set(i, 0, F::one());
    }
    x
}

/// Generic permutation-augmented risk for any empirical-risk map `er(X, Y, θ)`:
/// `er(X,Y,θ) + (1/T) Σ_t |er(X₀,Y,θ) − er(X,π_t(Y),θ)|`.
pub fn erg_value<F, R>(er: R, theta: &RegParams<F>, x: &Matrix<F>, y: &[F], perms: &PermutationSet) -> Result<F>
where
    F: Scalar,
    R: Fn(&Matrix<F>, &[F], &RegParams<F>) -> Result<F>,
{
    let base = er(x, y, theta)?;
    if perms.is_empty() {
        return Ok(base);
    }
    let x0 = intercept_design(x.rows(), x.cols());
    let null_risk = er(&x0, y, theta)?;
    let mut acc = F::zero();
    for t in 0..perms.len() {
        acc = acc + (null_risk - er(x, &perms.apply(t, y), theta)?).abs();
    }
    Ok(base + acc / F::of_usize(perms.len()))
}

/// Square-root quadratic empirical risk `‖Y − Xβ_family(θ, X, Y)‖` of a family.
pub fn rms_risk<F: Scalar>(family: Family) -> impl Fn(&Matrix<F>, &[F], &RegParams<F>) -> Result<F> {
    move |x, y, theta| {
        let beta = beta_family(family, theta, x, y)?;
        let pred = x.matvec(&beta);
        let resid: Vec<F> = y.iter().zip(&pred).map(|(&a, &b)| a - b).collect();
        Ok(rms(&resid))
    }
}
