use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Synthetic regression scenarios. Rows of `X` are Gaussian with AR(1)
/// covariance `Σ_ij = ρ^|i−j|` and `Y = Xβ* + ε`, `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Correlated features, dense `β*` of ones.
    A,
    /// Independent features, a few large coefficients.
    B,
    /// Correlated features, a few large coefficients on a correlated block.
    C,
}

impl Scenario {
    fn default_rho(self) -> f64 {
        match self {
            Scenario::A | Scenario::C => 0.9,
            Scenario::B => 0.0,
        }
    }

    fn default_signal(self) -> f64 {
        match self {
            Scenario::A => 1.0,
            Scenario::B | Scenario::C => 10.0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            other => Err(Error::InvalidInput(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n_train: usize,
    pub n_test: usize,
    pub p: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    pub rho: f64,
    /// Nonzero entries of `β*` in scenarios B and C; ignored by A.
    pub sparsity: usize,
    /// Value of every nonzero `β*` entry.
    pub signal: f64,
    /// Widen the design to `p = max(p, 2·n_train)` so that `n < p`.
    pub wide: bool,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            n_train: 100,
            n_test: 1000,
            p: 80,
            sigma: 10.0,
            rho: scenario.default_rho(),
            sparsity: 10,
            signal: scenario.default_signal(),
            wide: false,
            seed,
        }
    }

    pub fn effective_p(&self) -> usize {
        if self.wide {
            self.p.max(2 * self.n_train)
        } else {
            self.p
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_train < 2 || self.n_test < 2 || self.p == 0 {
            return bad(format!(
                "need n_train >= 2, n_test >= 2, p >= 1 (got {}, {}, {})",
                self.n_train, self.n_test, self.p
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be a finite non-negative number, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.scenario != Scenario::A && (self.sparsity == 0 || self.sparsity > self.effective_p()) {
            return bad(format!("sparsity must lie in 1..={}, got {}", self.effective_p(), self.sparsity));
        }
        if !self.signal.is_finite() {
            return bad("signal must be finite".into());
        }
        Ok(())
    }

    pub fn beta_star(&self) -> Vector<f64> {
        let p = self.effective_p();
        match self.scenario {
            Scenario::A => vec![self.signal; p],
            Scenario::B | Scenario::C => (0..p)
                .map(|j| if j < self.sparsity { self.signal } else { 0.0 })
                .collect(),
        }
    }

    pub fn label(&self) -> String {
        format!("scenario-{}", self.scenario)
    }
}

fn draw(cfg: &ScenarioConfig, beta: &[f64], n: usize, stream: u64) -> Dataset<f64> {
    let p = beta.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let innovation = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let start = xs.len();
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            let v = if j == 0 { z } else { cfg.rho * prev + innovation * z };
            xs.push(v);
            prev = v;
        }
        let signal: f64 = xs[start..].iter().zip(beta).map(|(a, b)| a * b).sum();
        let eps: f64 = if cfg.sigma > 0.0 {
            cfg.sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        ys.push(signal + eps);
    }
    let x = Matrix::new(n, p, xs).expect("generated entries are finite");
    Dataset::new(x, ys, cfg.label()).expect("shapes agree")
}

/// Draws a train set, a test set and the true coefficients. Train and test
/// come from disjoint random streams of the same seed.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<(Dataset<f64>, Dataset<f64>, Vector<f64>)> {
    cfg.validate()?;
    let beta = cfg.beta_star();
    let train = draw(cfg, &beta, cfg.n_train, 1);
    let test = draw(cfg, &beta, cfg.n_test, 2);
    Ok((train, test, beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(x: &Matrix<f64>) -> Vec<Vec<f64>> {
        let (n, p) = (x.rows(), x.cols());
        let means: Vec<f64> = (0..p).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
        (0..p)
            .map(|a| {
                (0..p)
                    .map(|b| (0..n).map(|i| (x.get(i, a) - means[a]) * (x.get(i, b) - means[b])).sum::<f64>() / n as f64)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn independent_features_in_b() {
        let mut cfg = ScenarioConfig::new(Scenario::B, 17);
        cfg.n_train = 2000;
        let (train, _, _) = generate_scenario(&cfg).unwrap();
        let c = cov(&train.x);
        let mut worst: f64 = 0.0;
        for a in 0..cfg.p {
            for b in 0..a {
                worst = worst.max((c[a][b] / (c[a][a] * c[b][b]).sqrt()).abs());
            }
        }
        assert!(worst <= 0.15, "max |corr| = {worst}");
    }

    #[test]
    fn noiseless_b_is_exactly_linear() {
        let mut cfg = ScenarioConfig::new(Scenario::B, 3);
        cfg.sigma = 0.0;
        let (train, _, beta) = generate_scenario(&cfg).unwrap();
        assert_eq!(beta.iter().filter(|&&b| b != 0.0).count(), 10);
        assert_eq!(train.x.matvec(&beta), train.y);
    }

    #[test]
    fn deterministic_and_disjoint_streams() {
        let cfg = ScenarioConfig::new(Scenario::C, 5);
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0.x.row(0), a.1.x.row(0));
        let other = generate_scenario(&ScenarioConfig::new(Scenario::C, 6)).unwrap();
        assert_ne!(a.0.y, other.0.y);
    }

    #[test]
    fn covariance_converges() {
        for (scenario, p) in [(Scenario::A, 3), (Scenario::B, 4)] {
            let mut cfg = ScenarioConfig::new(scenario, 21);
            cfg.n_train = 5000;
            cfg.p = p;
            cfg.sparsity = cfg.sparsity.min(p);
            let (train, _, _) = generate_scenario(&cfg).unwrap();
            let c = cov(&train.x);
            let mut frob = 0.0;
            for a in 0..p {
                for b in 0..p {
                    let target = cfg.rho.powi((a as i32 - b as i32).abs());
                    frob += (c[a][b] - target).powi(2);
                }
            }
            assert!(frob.sqrt() <= 0.1, "{scenario}: {}", frob.sqrt());
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScenarioConfig::new(Scenario::B, 0);
        cfg.sparsity = 81;
        assert!(generate_scenario(&cfg).is_err());
        let mut cfg = ScenarioConfig::new(Scenario::A, 0);
        cfg.rho = 1.0;
        assert!(generate_scenario(&cfg).is_err());
        let mut cfg = ScenarioConfig::new(Scenario::B, 0);
        cfg.wide = true;
        assert_eq!(generate_scenario(&cfg).unwrap().0.p(), 200);
    }
}
