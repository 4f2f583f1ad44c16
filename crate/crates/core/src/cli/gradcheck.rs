//! Analytic criterion gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::criterion::{make_permutations, Criterion, CriterionSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{Family, RegParams};
use crate::eval::derive_seed;
use crate::linalg::Matrix;
use crate::standardize::standardize;

/// Largest accepted componentwise relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;
/// Gradients smaller than this are compared in absolute terms.
const GRAD_FLOOR: f64 = 1e-6;
/// Relative mismatch of one-sided differences that marks a kink inside the stencil.
const KINK_RATIO: f64 = 1e-2;
const MAX_REDRAWS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckConfig {
    pub family: Family,
    pub draws: usize,
    pub n: usize,
    pub p: usize,
    pub permutations: usize,
    pub seed: u64,
    /// Scales the analytic gradient by `1 + corrupt`; a negative control.
    pub corrupt: f64,
}

impl GradcheckConfig {
    pub fn new(family: Family, seed: u64) -> Self {
        Self {
            family,
            draws: 20,
            n: 30,
            p: 6,
            permutations: 30,
            seed,
            corrupt: 0.0,
        }
    }
}

/// One θ draw; errors are the worst over each parameter block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub draw: usize,
    /// Draws rejected because a kink fell inside the stencil.
    pub redraws: usize,
    pub lambda: f64,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    /// Name of the component with the largest error.
    pub worst_component: String,
    pub worst: f64,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.worst <= GRADCHECK_TOLERANCE
    }
}

fn random_instance(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<(Matrix<f64>, Vec<f64>, RegParams<f64>)> {
    let (n, p) = (cfg.n, cfg.p);
    let x: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    let x = Matrix::new(n, p, x)?;
    let beta: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = x
        .matvec(&beta)
        .into_iter()
        .map(|v| v + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let (data, _) = standardize(&Dataset::new(x, y, "gradcheck")?)?;
    let theta = RegParams {
        lambda: 10f64.powf(rng.random_range(-1.0..2.0)),
        kappa: 10f64.powf(rng.random_range(-1.5..0.5)),
        gamma: (0..p).map(|_| rng.sample(StandardNormal)).collect(),
        mu: rng.sample(StandardNormal),
    };
    Ok((data.x, data.y, theta))
}

/// `None` when a kink sits inside the stencil of some component.
fn check_draw(cfg: &GradcheckConfig, draw: usize, seed: u64) -> Result<Option<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y, theta) = random_instance(cfg, &mut rng)?;
    let perms = make_permutations(cfg.n, cfg.permutations, seed)?;
    let criterion = Criterion::new(CriterionSpec::new(cfg.family, perms), x, y)?;
    let eval = match criterion.value_and_gradient(&theta) {
        Ok(e) => e,
        Err(Error::NonDifferentiable(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let family = cfg.family;
    let analytic = eval.grad.expect("gradient requested").to_flat(family);
    let flat = theta.to_flat(family);
    let names = family.component_names(cfg.p);
    let f0 = eval.value;

    let mut errors = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let h = 1e-5 * (1.0 + flat[i].abs());
        let mut up = flat.clone();
        up[i] += h;
        let mut down = flat.clone();
        down[i] -= h;
        let fu = criterion.value(&theta.with_flat(family, &up))?;
        let fd = criterion.value(&theta.with_flat(family, &down))?;
        let (fwd, bwd) = ((fu - f0) / h, (f0 - fd) / h);
        if (fwd - bwd).abs() > KINK_RATIO * fwd.abs().max(bwd.abs()).max(GRAD_FLOOR) {
            return Ok(None);
        }
        let numeric = (fu - fd) / (2.0 * h);
        let a = analytic[i] * (1.0 + cfg.corrupt);
        errors.push((a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR));
    }

    let block = |pred: &dyn Fn(&str) -> bool| -> Option<f64> {
        let picked: Vec<f64> = names.iter().zip(&errors).filter(|(n, _)| pred(n)).map(|(_, &e)| e).collect();
        (!picked.is_empty()).then(|| picked.into_iter().fold(0.0, f64::max))
    };
    let (wi, &worst) = errors
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one component");
    Ok(Some(GradcheckRow {
        draw,
        redraws: 0,
        lambda: errors[0],
        kappa: block(&|n| n == "kappa"),
        gamma: block(&|n| n.starts_with("gamma")),
        mu: block(&|n| n == "mu"),
        worst_component: names[wi].clone(),
        worst,
    }))
}

/// Runs `cfg.draws` kink-free comparisons.
pub fn gradient_check(cfg: &GradcheckConfig) -> Result<Vec<GradcheckRow>> {
    if cfg.draws == 0 || cfg.n < 3 || cfg.p == 0 {
        return Err(Error::InvalidInput(format!(
            "gradcheck needs draws ≥ 1, n ≥ 3 and p ≥ 1, got draws={} n={} p={}",
            cfg.draws, cfg.n, cfg.p
        )));
    }
    let mut rows = Vec::with_capacity(cfg.draws);
    for draw in 0..cfg.draws {
        let mut found = None;
        for attempt in 0..MAX_REDRAWS {
            let seed = derive_seed(cfg.seed, (draw * MAX_REDRAWS + attempt) as u64);
            if let Some(mut row) = check_draw(cfg, draw, seed)? {
                row.redraws = attempt;
                found = Some(row);
                break;
            }
        }
        rows.push(found.ok_or_else(|| {
            Error::NonDifferentiable(format!("draw {draw}: every attempt landed next to a kink"))
        })?);
    }
    Ok(rows)
}

pub fn format_table(rows: &[GradcheckRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |e| format!("{e:.2e}"));
    let mut out = format!(
        "{:>4} {:>10} {:>10} {:>10} {:>10}  {:<10} {}\n",
        "draw", "lambda", "kappa", "gamma", "mu", "worst", "status"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>4} {:>10} {:>10} {:>10} {:>10}  {:<10} {}\n",
            r.draw,
            cell(Some(r.lambda)),
            cell(r.kappa),
            cell(r.gamma),
            cell(r.mu),
            r.worst_component,
            if r.passed() { "ok" } else { "FAIL" }
        ));
    }
    out
}
