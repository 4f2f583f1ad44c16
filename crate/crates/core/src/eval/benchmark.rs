use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_scenario, split, Dataset, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{predict, Family};
use crate::eval::mann_whitney::mann_whitney;
use crate::eval::ridge_cv::{default_lambda_grid, ols_fit, ridge_cv_baseline};
use crate::eval::{r2_conventional, r2_score};
use crate::optimizer::{train, TrainOptions};

/// Report keys whose content depends on wall-clock time.
pub const TIMING_KEYS: [&str; 3] = ["runtimes", "mw_runtimes", "fastest"];

/// Significance level for the winner flags.
const MW_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Bkks(Family),
    RidgeCv,
    Ols,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Bkks(f) => f.label(),
            Method::RidgeCv => "ridgecv",
            Method::Ols => "ols",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ridgecv" => Ok(Method::RidgeCv),
            "ols" => Ok(Method::Ols),
            other => other.parse().map(Method::Bkks),
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.label().to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Fresh train/test pair per repetition, seeded by the repetition.
    Scenario(ScenarioConfig),
    /// Random train/test split of a fixed dataset per repetition.
    Split { data: Dataset<f64>, test_fraction: f64 },
}

impl DataSource {
    fn label(&self) -> String {
        match self {
            DataSource::Scenario(cfg) => cfg.label(),
            DataSource::Split { data, .. } => data.name.clone(),
        }
    }

    fn draw(&self, seed: u64) -> Result<(Dataset<f64>, Dataset<f64>)> {
        match self {
            DataSource::Scenario(cfg) => {
                let cfg = ScenarioConfig { seed, ..cfg.clone() };
                let (tr, te, _) = generate_scenario(&cfg)?;
                Ok((tr, te))
            }
            DataSource::Split { data, test_fraction } => split(data, *test_fraction, seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub source: DataSource,
    pub repetitions: usize,
    pub seed: u64,
    pub train: TrainOptions,
    pub cv_folds: usize,
    pub lambda_grid: Vec<f64>,
    /// Worker threads for repetitions; 1 runs them in order on this thread.
    pub jobs: usize,
}

impl BenchmarkConfig {
    pub fn new(methods: Vec<Method>, source: DataSource, repetitions: usize, seed: u64) -> Self {
        Self {
            methods,
            source,
            repetitions,
            seed,
            train: TrainOptions::default(),
            cv_folds: 5,
            lambda_grid: default_lambda_grid(),
            jobs: 1,
        }
    }
}

/// Score of one method on one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    pub r2: f64,
    pub r2_conventional: f64,
    /// Seconds spent fitting.
    pub runtime: f64,
    pub iterations: Option<usize>,
    pub sparsity_selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dataset: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub methods: Vec<String>,
    /// `scores[method][repetition]`.
    pub scores: Vec<Vec<f64>>,
    pub scores_conventional: Vec<Vec<f64>>,
    pub iterations: Vec<Vec<Option<usize>>>,
    pub selected: Vec<Vec<Option<usize>>>,
    pub runtimes: Vec<Vec<f64>>,
    /// Two-sided MW p-values on scores, keyed `"a|b"`.
    pub mw: BTreeMap<String, f64>,
    pub mw_runtimes: BTreeMap<String, f64>,
    /// Best mean score and every method not significantly worse.
    pub winners: Vec<String>,
    /// Lowest mean runtime and every method not significantly slower.
    pub fastest: Vec<String>,
}

impl BenchmarkReport {
    pub fn method_index(&self, label: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == label)
    }

    pub fn mean_score(&self, label: &str) -> Option<f64> {
        self.method_index(label).map(|i| mean(&self.scores[i]))
    }

    pub fn mean_runtime(&self, label: &str) -> Option<f64> {
        self.method_index(label).map(|i| mean(&self.runtimes[i]))
    }

    /// One row per repetition and method.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "repetition,method,r2,r2_conventional,runtime_s,iterations,selected")?;
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in 0..self.m {
            for (k, name) in self.methods.iter().enumerate() {
                writeln!(
                    out,
                    "{r},{name},{:?},{:?},{:?},{},{}",
                    self.scores[k][r],
                    self.scores_conventional[k][r],
                    self.runtimes[k][r],
                    opt(self.iterations[k][r]),
                    opt(self.selected[k][r]),
                )?;
            }
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Seed of repetition `index` under `master` (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fit_one(method: Method, train_set: &Dataset<f64>, test: &Dataset<f64>, cfg: &BenchmarkConfig, seed: u64) -> Result<MethodScore> {
    let start = Instant::now();
    let (pred, iterations, selected) = match method {
        Method::Bkks(family) => {
            let opts = TrainOptions {
                seed,
                ..cfg.train.clone()
            };
            let fit = train(family, train_set, &opts)?;
            (fit.predict(&test.x)?, Some(fit.iterations), Some(fit.selected()))
        }
        Method::RidgeCv => {
            let fit = ridge_cv_baseline(train_set, cfg.cv_folds, &cfg.lambda_grid, seed)?;
            (predict(&fit.beta, &test.x, &fit.meta)?, None, None)
        }
        Method::Ols => {
            let (beta, meta) = ols_fit(train_set)?;
            (predict(&beta, &test.x, &meta)?, None, None)
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    Ok(MethodScore {
        method: method.label().to_string(),
        r2: r2_score(&test.y, &pred)?,
        r2_conventional: r2_conventional(&test.y, &pred)?,
        runtime,
        iterations,
        sparsity_selected: selected,
    })
}

fn run_repetition(cfg: &BenchmarkConfig, r: usize) -> Result<Vec<MethodScore>> {
    let seed = derive_seed(cfg.seed, r as u64);
    let (tr, te) = cfg.source.draw(seed).map_err(|e| Error::Repetition {
        method: "data".into(),
        repetition: r,
        source: Box::new(e),
    })?;
    cfg.methods
        .iter()
        .map(|&m| {
            fit_one(m, &tr, &te, cfg, seed).map_err(|e| Error::Repetition {
                method: m.label().into(),
                repetition: r,
                source: Box::new(e),
            })
        })
        .collect()
}

fn pairwise(methods: &[String], samples: &[Vec<f64>]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for a in 0..methods.len() {
        for b in (a + 1)..methods.len() {
            let p = mann_whitney(&samples[a], &samples[b])?.p_value;
            out.insert(format!("{}|{}", methods[a], methods[b]), p);
        }
    }
    Ok(out)
}

fn flag_best(methods: &[String], samples: &[Vec<f64>], mw: &BTreeMap<String, f64>, higher_is_better: bool) -> Vec<String> {
    let means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    let best = (0..methods.len())
        .reduce(|b, i| {
            let better = if higher_is_better { means[i] > means[b] } else { means[i] < means[b] };
            if better { i } else { b }
        })
        .unwrap_or(0);
    (0..methods.len())
        .filter(|&i| {
            if i == best {
                return true;
            }
            let key = if i < best {
                format!("{}|{}", methods[i], methods[best])
            } else {
                format!("{}|{}", methods[best], methods[i])
            };
            mw.get(&key).is_some_and(|&p| p >= MW_ALPHA)
        })
        .map(|i| methods[i].clone())
        .collect()
}

/// Runs every method on `M` fresh train/test pairs and compares them.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if cfg.repetitions < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 repetitions for the Mann-Whitney comparison, got {}",
            cfg.repetitions
        )));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidInput("no methods to benchmark".into()));
    }
    let reps: Vec<Result<Vec<MethodScore>>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.repetitions).into_par_iter().map(|r| run_repetition(cfg, r)).collect())
    } else {
        (0..cfg.repetitions).map(|r| run_repetition(cfg, r)).collect()
    };

    let k = cfg.methods.len();
    let m = cfg.repetitions;
    let mut scores = vec![Vec::with_capacity(m); k];
    let mut scores_conventional = vec![Vec::with_capacity(m); k];
    let mut runtimes = vec![Vec::with_capacity(m); k];
    let mut iterations = vec![Vec::with_capacity(m); k];
    let mut selected = vec![Vec::with_capacity(m); k];
    for rep in reps {
        for (i, s) in rep?.into_iter().enumerate() {
            scores[i].push(s.r2);
            scores_conventional[i].push(s.r2_conventional);
            runtimes[i].push(s.runtime);
            iterations[i].push(s.iterations);
            selected[i].push(s.sparsity_selected);
        }
    }
    let methods: Vec<String> = cfg.methods.iter().map(|m| m.label().to_string()).collect();
    let mw = pairwise(&methods, &scores)?;
    let mw_runtimes = pairwise(&methods, &runtimes)?;
    let winners = flag_best(&methods, &scores, &mw, true);
    let fastest = flag_best(&methods, &runtimes, &mw_runtimes, false);
    Ok(BenchmarkReport {
        dataset: cfg.source.label(),
        m,
        methods,
        scores,
        scores_conventional,
        iterations,
        selected,
        runtimes,
        mw,
        mw_runtimes,
        winners,
        fastest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scenario;

    fn small_scenario() -> DataSource {
        let mut cfg = ScenarioConfig::new(Scenario::B, 0);
        cfg.p = 10;
        cfg.sparsity = 3;
        cfg.n_test = 200;
        DataSource::Scenario(cfg)
    }

    #[test]
    fn method_parsing() {
        assert_eq!("SBKK".parse::<Method>().unwrap(), Method::Bkks(Family::SparseRidge));
        assert_eq!("ridgecv".parse::<Method>().unwrap(), Method::RidgeCv);
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn identical_methods_are_indistinguishable() {
        let cfg = BenchmarkConfig::new(
            vec![Method::Bkks(Family::Ridge), Method::Bkks(Family::Ridge)],
            small_scenario(),
            6,
            3,
        );
        let report = run_benchmark(&cfg).unwrap();
        assert_eq!(report.scores[0], report.scores[1]);
        assert!(report.mw["bkk|bkk"] >= 0.9);
    }

    #[test]
    fn minimal_run() {
        let cfg = BenchmarkConfig::new(vec![Method::Bkks(Family::Ridge), Method::RidgeCv, Method::Ols], small_scenario(), 2, 1);
        let report = run_benchmark(&cfg).unwrap();
        assert_eq!(report.m, 2);
        assert!(report.scores.iter().all(|s| s.len() == 2));
        assert_eq!(report.mw.len(), 3);
        assert!(!report.winners.is_empty());
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn single_repetition_rejected() {
        let cfg = BenchmarkConfig::new(vec![Method::RidgeCv], small_scenario(), 1, 1);
        assert!(run_benchmark(&cfg).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut cfg = BenchmarkConfig::new(vec![Method::Bkks(Family::Aggregated), Method::RidgeCv], small_scenario(), 4, 8);
        let a = run_benchmark(&cfg).unwrap();
        cfg.jobs = 3;
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.mw, b.mw);
    }

    #[test]
    fn failures_carry_context() {
        let mut cfg = ScenarioConfig::new(Scenario::B, 0);
        cfg.wide = true;
        cfg.p = 10;
        cfg.n_train = 20;
        cfg.sparsity = 3;
        let bench = BenchmarkConfig::new(vec![Method::RidgeCv, Method::Ols], DataSource::Scenario(cfg), 2, 0);
        match run_benchmark(&bench) {
            Err(Error::Repetition { method, repetition, .. }) => assert_eq!((method.as_str(), repetition), ("ols", 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), s.len());
    }
}
