//! ADAM descent on θ and the full training procedures.
//!
//! λ and κ are optimized through their logarithms so they stay positive
//! without projection; γ and μ move in natural coordinates.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criterion::{make_permutations, Criterion, CriterionSpec, Evaluation, GuardPolicy, DEFAULT_GUARD_EPS};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{gate_counts, predict, Family, GateSpread, RegParams, ThetaGrad};
use crate::linalg::{max_abs, Matrix, Vector};
use crate::scalar::Scalar;
use crate::standardize::{standardize_with, StandardizationMeta};

pub const MAX_RETRY_ATTEMPTS: usize = 5;
const RETRY_JITTER: f64 = 1e-6;

/// When the descent stops before `max_iter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// `|value_k − value_{k−1}| < tolerance`.
    #[default]
    ValueChange,
    /// Largest gradient component (internal coordinates) below tolerance.
    GradientNorm,
    /// Largest parameter move (internal coordinates) below tolerance.
    StepSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    pub stop: StopRule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            max_iter: 1000,
            tolerance: 1e-4,
            stop: StopRule::ValueChange,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps >= 0.0
            && self.tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid ADAM configuration {self:?}")))
        }
    }
}

/// First and second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vector<F>,
    pub v: Vector<F>,
}

impl<F: Scalar> AdamState<F> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            m: vec![F::zero(); dim],
            v: vec![F::zero(); dim],
        }
    }
}

/// One bias-corrected ADAM update at step `t ≥ 1`; returns the new state and
/// the parameter delta `−lr · m̂ / (√v̂ + eps)`.
pub fn adam_step<F: Scalar>(state: &AdamState<F>, grad: &[F], cfg: &AdamConfig, t: usize) -> Result<(AdamState<F>, Vector<F>)> {
    if t == 0 {
        return Err(Error::InvalidInput("ADAM step index starts at 1".into()));
    }
    if grad.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            context: "adam gradient",
            expected: state.m.len(),
            got: grad.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged("non-finite gradient".into()));
    }
    let (b1, b2) = (F::of(cfg.beta1), F::of(cfg.beta2));
    let lr = F::of(cfg.learning_rate);
    let eps = F::of(cfg.eps);
    let c1 = F::one() - b1.powi(t as i32);
    let c2 = F::one() - b2.powi(t as i32);
    let mut next = state.clone();
    let mut delta = Vec::with_capacity(grad.len());
    for (i, &g) in grad.iter().enumerate() {
        next.m[i] = b1 * state.m[i] + (F::one() - b1) * g;
        next.v[i] = b2 * state.v[i] + (F::one() - b2) * g * g;
        let m_hat = next.m[i] / c1;
        let v_hat = next.v[i] / c2;
        delta.push(-lr * m_hat / (v_hat.sqrt() + eps));
    }
    Ok((next, delta))
}

/// Multiplies every active component of θ by `1 + u·10⁻⁶`, `u ~ U[−1, 1]`,
/// drawn from a stream fixed by `(seed, attempt)`.
pub fn perturb_retry<F: Scalar>(theta: &RegParams<F>, family: Family, attempt: usize, seed: u64) -> Result<RegParams<F>> {
    if attempt > MAX_RETRY_ATTEMPTS {
        return Err(Error::Diverged(format!(
            "still at a non-differentiable point after {MAX_RETRY_ATTEMPTS} perturbations"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt as u64);
    let flat: Vector<F> = theta
        .to_flat(family)
        .into_iter()
        .map(|v| v * (F::one() + F::of(rng.random_range(-1.0..=1.0) * RETRY_JITTER)))
        .collect();
    Ok(theta.with_flat(family, &flat))
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    /// Number of label permutations.
    pub permutations: usize,
    pub seed: u64,
    pub lambda0: f64,
    pub kappa0: f64,
    pub mu0: f64,
    /// Rescale design columns to unit RMS (they are always centered).
    pub scale_x: bool,
    pub guard: GuardPolicy,
    pub spread: GateSpread,
    /// Evaluate permutation terms on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            permutations: 30,
            seed: 0,
            lambda0: 1e3,
            kappa0: 0.1,
            mu0: 0.0,
            scale_x: true,
            guard: GuardPolicy::Error,
            spread: GateSpread::SumOfSquares,
            parallel: false,
        }
    }
}

/// Forward ridge fits performed by a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounts {
    /// Evaluation at the starting point.
    pub setup_fits: usize,
    /// Evaluations after each ADAM step; `iterations · (T + 1)`.
    pub loop_fits: usize,
    /// Extra evaluations spent on perturb-and-retry.
    pub retry_fits: usize,
}

impl WorkCounts {
    pub fn total(&self) -> usize {
        self.setup_fits + self.loop_fits + self.retry_fits
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult<F> {
    pub family: Family,
    pub theta_hat: RegParams<F>,
    /// Coefficients on the standardized scale; see `meta`.
    pub beta_hat: Vector<F>,
    pub meta: StandardizationMeta<F>,
    pub gates: Option<Vector<F>>,
    pub criterion_trace: Vector<F>,
    pub iterations: usize,
    pub converged: bool,
    pub retries: usize,
    pub work: WorkCounts,
    pub permutations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl<F: Scalar> FitResult<F> {
    /// Predictions on the raw response scale.
    pub fn predict(&self, x: &Matrix<F>) -> Result<Vector<F>> {
        predict(&self.beta_hat, x, &self.meta)
    }

    /// Features not gated out (all of them for the ridge family).
    pub fn selected(&self) -> usize {
        match &self.gates {
            Some(g) => g.len() - gate_counts(g).0,
            None => self.beta_hat.len(),
        }
    }

    pub fn final_value(&self) -> F {
        *self.criterion_trace.last().expect("trace is never empty")
    }
}

fn to_internal<F: Scalar>(theta: &RegParams<F>, family: Family) -> Vector<F> {
    let mut flat = theta.to_flat(family);
    flat[0] = flat[0].ln();
    if family.uses_gates() {
        flat[1] = flat[1].ln();
    }
    flat
}

fn from_internal<F: Scalar>(base: &RegParams<F>, family: Family, phi: &[F]) -> RegParams<F> {
    let mut flat = phi.to_vec();
    flat[0] = flat[0].exp();
    if family.uses_gates() {
        flat[1] = flat[1].exp();
    }
    base.with_flat(family, &flat)
}

fn internal_grad<F: Scalar>(grad: &ThetaGrad<F>, theta: &RegParams<F>, family: Family) -> Vector<F> {
    let mut g = grad.to_flat(family);
    g[0] = g[0] * theta.lambda;
    if family.uses_gates() {
        g[1] = g[1] * theta.kappa;
    }
    g
}

struct Evaluator<'a, F> {
    criterion: &'a Criterion<F>,
    family: Family,
    seed: u64,
    retries: usize,
    retry_fits: usize,
}

impl<F: Scalar> Evaluator<'_, F> {
    /// Evaluates at `theta`, perturbing it in place on a kink.
    fn eval(&mut self, theta: &mut RegParams<F>, step: usize) -> Result<Evaluation<F>> {
        let origin = theta.clone();
        let mut attempt = 0;
        loop {
            match self.criterion.value_and_gradient(theta) {
                Err(Error::NonDifferentiable(_)) | Err(Error::NotPositiveDefinite { .. }) => {
                    self.retry_fits += self.criterion.t() + 1;
                    attempt += 1;
                    self.retries += 1;
                    let stream_seed = self.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    *theta = perturb_retry(&origin, self.family, attempt, stream_seed)?;
                }
                other => return other,
            }
        }
    }
}

/// Trains one family on raw data: standardizes, fixes the permutations, and
/// runs ADAM from the default starting point until the stop rule fires.
pub fn train<F: Scalar>(family: Family, data: &Dataset<F>, opts: &TrainOptions) -> Result<FitResult<F>> {
    opts.adam.validate()?;
    let start = Instant::now();
    let (std_data, meta) = standardize_with(data, opts.scale_x)?;
    let p = std_data.p();
    let perms = make_permutations(std_data.n(), opts.permutations, opts.seed)?;
    let spec = CriterionSpec {
        family,
        perms,
        guard_eps: F::of(DEFAULT_GUARD_EPS),
        guard: opts.guard,
        spread: opts.spread,
    };
    let criterion = Criterion::new(spec, std_data.x, std_data.y)?.with_parallel(opts.parallel);

    let mut theta = RegParams {
        lambda: F::of(opts.lambda0),
        kappa: F::of(opts.kappa0),
        gamma: vec![F::zero(); p],
        mu: F::of(opts.mu0),
    };
    theta.validate(p)?;

    let mut ev = Evaluator {
        criterion: &criterion,
        family,
        seed: opts.seed,
        retries: 0,
        retry_fits: 0,
    };
    let mut eval = ev.eval(&mut theta, 0)?;
    let mut work = WorkCounts {
        setup_fits: eval.fits,
        ..WorkCounts::default()
    };
    let mut trace = vec![eval.value];
    let mut state = AdamState::zeros(family.active_len(p));
    let mut iterations = 0;
    let mut converged = false;
    let tol = F::of(opts.adam.tolerance);

    while iterations < opts.adam.max_iter {
        let grad = internal_grad(eval.grad.as_ref().expect("gradient evaluated"), &theta, family);
        let (next, delta) = adam_step(&state, &grad, &opts.adam, iterations + 1)?;
        state = next;
        let phi: Vector<F> = to_internal(&theta, family)
            .iter()
            .zip(&delta)
            .map(|(&a, &d)| a + d)
            .collect();
        theta = from_internal(&theta, family, &phi);
        if theta.validate(p).is_err() {
            return Err(Error::Diverged(format!("parameters left their domain at step {}", iterations + 1)));
        }
        iterations += 1;

        let prev = eval.value;
        eval = ev.eval(&mut theta, iterations)?;
        work.loop_fits += eval.fits;
        trace.push(eval.value);

        let stop = match opts.adam.stop {
            StopRule::ValueChange => (eval.value - prev).abs() < tol,
            StopRule::GradientNorm => {
                let g = internal_grad(eval.grad.as_ref().expect("gradient evaluated"), &theta, family);
                max_abs(&g) < tol
            }
            StopRule::StepSize => max_abs(&delta) < tol,
        };
        if stop {
            converged = true;
            break;
        }
    }
    work.retry_fits = ev.retry_fits;
    let retries = ev.retries;

    Ok(FitResult {
        family,
        theta_hat: theta,
        beta_hat: eval.beta,
        meta,
        gates: eval.gates,
        criterion_trace: trace,
        iterations,
        converged,
        retries,
        work,
        permutations: opts.permutations,
        seed: opts.seed,
        wall_time: start.elapsed(),
    })
}
