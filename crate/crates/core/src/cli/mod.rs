//! Command-line front end: `train`, `benchmark`, `synthetic` and `gradcheck`.
//!
//! Exit codes: 0 on success, 1 on input or runtime errors, 2 when a
//! verification (`gradcheck`) fails.

mod config;
mod gradcheck;

pub use config::{overlay, parse_config, read_config};
pub use gradcheck::{format_table, gradient_check, GradcheckConfig, GradcheckRow, GRADCHECK_TOLERANCE};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::criterion::GuardPolicy;
use crate::data::{generate_scenario, load_csv, split, write_csv, Dataset, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{Family, GateSpread};
use crate::eval::{r2_score, run_benchmark, BenchmarkConfig, BenchmarkReport, DataSource, Method};
use crate::optimizer::{train, AdamConfig, StopRule, TrainOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bkks", version, about = "Permutation-augmented training of regularized linear regression")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file whose entries override command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Fit one estimator family and write fit.json.
    Train(TrainArgs),
    /// Compare methods over repeated train/test draws; writes report.json and report.csv.
    Benchmark(BenchmarkArgs),
    /// Write a synthetic scenario to CSV files.
    Synthetic(SyntheticArgs),
    /// Compare analytic criterion gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Response column of the CSV file.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Share of CSV rows held out for testing.
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    /// Synthetic scenario: A, B or C.
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long, default_value_t = 100)]
    pub n_train: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long = "p", default_value_t = 80)]
    pub p: usize,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    /// Feature correlation; defaults to the scenario's own value.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub sparsity: usize,
    /// Size of the nonzero coefficients; defaults to the scenario's own value.
    #[arg(long)]
    pub signal: Option<f64>,
    /// Use at least twice as many features as training rows.
    #[arg(long)]
    pub wide: bool,
}

impl DataArgs {
    fn scenario_config(&self, scenario: Scenario, seed: u64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(scenario, seed);
        cfg.n_train = self.n_train;
        cfg.n_test = self.n_test;
        cfg.p = self.p;
        cfg.sigma = self.sigma;
        cfg.sparsity = self.sparsity;
        cfg.wide = self.wide;
        if let Some(rho) = self.rho {
            cfg.rho = rho;
        }
        if let Some(signal) = self.signal {
            cfg.signal = signal;
        }
        cfg
    }

    fn load(&self) -> Result<Dataset<f64>> {
        let path = self.csv.as_deref().expect("checked by source()");
        let target = self
            .target
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("--csv requires --target".into()))?;
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidInput(format!("delimiter '{}' is not ASCII", self.delimiter)));
        }
        load_csv(path, target, self.delimiter as u8)
    }

    fn check_source(&self) -> Result<()> {
        match (&self.csv, &self.scenario) {
            (Some(_), Some(_)) => Err(Error::InvalidInput("give either --csv or --scenario, not both".into())),
            (None, None) => Err(Error::InvalidInput("a data source is required: --csv PATH --target NAME or --scenario A|B|C".into())),
            _ => Ok(()),
        }
    }

    fn source(&self, seed: u64) -> Result<DataSource> {
        self.check_source()?;
        match self.scenario {
            Some(s) => Ok(DataSource::Scenario(self.scenario_config(s, seed))),
            None => Ok(DataSource::Split {
                data: self.load()?,
                test_fraction: self.test_fraction,
            }),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// value-change, gradient-norm or step-size.
    #[arg(long, default_value = "value-change", value_parser = parse_stop)]
    pub stop: StopRule,
    #[arg(long, default_value_t = 1e3)]
    pub lambda0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub kappa0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu0: f64,
    /// Center the features without rescaling them.
    #[arg(long)]
    pub no_standardize_x: bool,
    /// Gate spread: sum-of-squares or variance.
    #[arg(long, default_value = "sum-of-squares", value_parser = parse_spread)]
    pub spread: GateSpread,
    /// At a kink: error (perturb and retry) or subgradient.
    #[arg(long, default_value = "error", value_parser = parse_guard)]
    pub guard: GuardPolicy,
    /// Evaluate permutation terms on all cores.
    #[arg(long)]
    pub parallel: bool,
}

impl OptimizerArgs {
    fn options(&self, permutations: usize) -> TrainOptions {
        TrainOptions {
            adam: AdamConfig {
                learning_rate: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                max_iter: self.max_iter,
                tolerance: self.tol,
                stop: self.stop,
            },
            permutations,
            seed: self.seed,
            lambda0: self.lambda0,
            kappa0: self.kappa0,
            mu0: self.mu0,
            scale_x: !self.no_standardize_x,
            guard: self.guard,
            spread: self.spread,
            parallel: self.parallel,
        }
    }
}

fn parse_kebab<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown value '{s}'"))
}

fn parse_stop(s: &str) -> std::result::Result<StopRule, String> {
    parse_kebab(s)
}

fn parse_spread(s: &str) -> std::result::Result<GateSpread, String> {
    parse_kebab(s)
}

fn parse_guard(s: &str) -> std::result::Result<GuardPolicy, String> {
    parse_kebab(s)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// bkk, sbkk or abkk.
    #[arg(long, default_value = "bkk")]
    pub family: Family,
    /// Number of label permutations.
    #[arg(long = "T", default_value_t = 30)]
    #[serde(rename = "T")]
    pub t: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Comma-separated: bkk, sbkk, abkk, ridgecv, ols.
    #[arg(long, value_delimiter = ',', default_value = "bkk,sbkk,abkk,ridgecv")]
    pub methods: Vec<Method>,
    /// Repetitions.
    #[arg(long = "M", default_value_t = 20)]
    #[serde(rename = "M")]
    pub m: usize,
    /// Permutation counts; several values need --sweep-T.
    #[arg(long = "T", value_delimiter = ',', default_value = "30")]
    #[serde(rename = "T")]
    pub t: Vec<usize>,
    /// Write one report per T value.
    #[arg(long = "sweep-T")]
    #[serde(rename = "sweep_T")]
    pub sweep_t: bool,
    /// Worker threads for repetitions.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SyntheticArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "bkk")]
    pub family: Family,
    #[arg(long, default_value_t = 20)]
    pub draws: usize,
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long = "p", default_value_t = 6)]
    pub p: usize,
    #[arg(long = "T", default_value_t = 30)]
    #[serde(rename = "T")]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scale analytic gradients by 1 + this factor (negative control).
    #[arg(long, default_value_t = 0.0, hide = true)]
    pub corrupt: f64,
}

enum Outcome {
    Done,
    VerificationFailed(String),
}

/// Parses `argv` (program name first), applies `--config`, and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(ParseFailure::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
        Err(ParseFailure::Config(e)) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    match dispatch(&cli.command) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::VerificationFailed(msg)) => {
            eprintln!("verification failed: {msg}");
            EXIT_VERIFICATION
        }
        Err(e) => {
            let message = e.to_string();
            eprintln!("error: {message}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let cause = s.to_string();
                if !message.contains(&cause) {
                    eprintln!("  caused by: {cause}");
                }
                source = s.source();
            }
            EXIT_ERROR
        }
    }
}

enum ParseFailure {
    Clap(clap::Error),
    Config(Error),
}

fn parse(argv: &[OsString]) -> std::result::Result<Cli, ParseFailure> {
    let first = Cli::try_parse_from(argv).map_err(ParseFailure::Clap)?;
    let Some(path) = &first.config else {
        return Ok(first);
    };
    let entries = read_config(path).map_err(ParseFailure::Config)?;
    Cli::try_parse_from(overlay(argv, &entries)).map_err(ParseFailure::Clap)
}

fn dispatch(command: &Command) -> Result<Outcome> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Synthetic(args) => cmd_synthetic(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn cmd_train(args: &TrainArgs) -> Result<Outcome> {
    let seed = args.optimizer.seed;
    let (train_set, test_set) = match args.data.source(seed)? {
        DataSource::Scenario(cfg) => {
            let (tr, te, _) = generate_scenario(&cfg)?;
            (tr, Some(te))
        }
        DataSource::Split { data, test_fraction } if test_fraction > 0.0 => {
            let (tr, te) = split(&data, test_fraction, seed)?;
            (tr, Some(te))
        }
        DataSource::Split { data, .. } => (data, None),
    };
    let fit = train(args.family, &train_set, &args.optimizer.options(args.t))?;
    let train_r2 = r2_score(&train_set.y, &fit.predict(&train_set.x)?)?;
    let test_r2 = match &test_set {
        Some(te) => Some(r2_score(&te.y, &fit.predict(&te.x)?)?),
        None => None,
    };

    ensure_dir(&args.out)?;
    let path = args.out.join("fit.json");
    let artifact = json!({
        "command": "train",
        "config": args,
        "dataset": train_set.name,
        "n_train": train_set.n(),
        "n_test": test_set.as_ref().map(Dataset::n),
        "p": train_set.p(),
        "train_r2": train_r2,
        "test_r2": test_r2,
        "fit": fit,
    });
    write_json(&path, &artifact)?;

    println!("family       {}", fit.family);
    println!("dataset      {} (n={}, p={})", train_set.name, train_set.n(), train_set.p());
    println!("iterations   {} ({})", fit.iterations, if fit.converged { "converged" } else { "hit max-iter" });
    println!("criterion    {:.6} -> {:.6}", fit.criterion_trace[0], fit.final_value());
    println!("lambda       {:.6e}", fit.theta_hat.lambda);
    if fit.family.uses_gates() {
        println!("kappa        {:.6e}", fit.theta_hat.kappa);
        println!("selected     {} of {}", fit.selected(), train_set.p());
    }
    if fit.family.uses_mu() {
        println!("mu           {:.6}", fit.theta_hat.mu);
    }
    println!("train r2     {train_r2:.4}");
    if let Some(r2) = test_r2 {
        println!("test r2      {r2:.4}");
    }
    if fit.retries > 0 {
        println!("retries      {}", fit.retries);
    }
    println!("wrote        {}", path.display());
    Ok(Outcome::Done)
}

fn print_report(report: &BenchmarkReport) {
    println!("{} (M={})", report.dataset, report.m);
    println!("{:<10} {:>10} {:>12}  winner", "method", "mean r2", "mean time s");
    for name in &report.methods {
        println!(
            "{:<10} {:>10.4} {:>12.4}  {}",
            name,
            report.mean_score(name).unwrap_or(f64::NAN),
            report.mean_runtime(name).unwrap_or(f64::NAN),
            if report.winners.contains(name) { "*" } else { "" }
        );
    }
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<Outcome> {
    if args.t.is_empty() {
        return Err(Error::InvalidInput("--T needs at least one value".into()));
    }
    if args.t.len() > 1 && !args.sweep_t {
        return Err(Error::InvalidInput("several --T values need --sweep-T".into()));
    }
    let source = args.data.source(args.optimizer.seed)?;
    ensure_dir(&args.out)?;
    for &t in &args.t {
        let mut cfg = BenchmarkConfig::new(args.methods.clone(), source.clone(), args.m, args.optimizer.seed);
        cfg.train = args.optimizer.options(t);
        cfg.cv_folds = args.cv_folds;
        cfg.jobs = args.jobs.max(1);
        let report = run_benchmark(&cfg)?;

        let stem = if args.sweep_t { format!("report_T{t}") } else { "report".to_string() };
        let mut value = serde_json::to_value(&report)?;
        if let Value::Object(map) = &mut value {
            map.insert("command".into(), json!("benchmark"));
            map.insert("config".into(), serde_json::to_value(args)?);
            map.insert("T".into(), json!(t));
        }
        write_json(&args.out.join(format!("{stem}.json")), &value)?;
        let mut csv = Vec::new();
        report
            .write_csv(&mut csv)
            .map_err(|source| Error::Io { path: args.out.join(format!("{stem}.csv")), source })?;
        write_file(&args.out.join(format!("{stem}.csv")), &csv)?;

        if args.sweep_t {
            println!("T = {t}");
        }
        print_report(&report);
    }
    println!("wrote        {}", args.out.display());
    Ok(Outcome::Done)
}

fn cmd_synthetic(args: &SyntheticArgs) -> Result<Outcome> {
    let scenario = args
        .data
        .scenario
        .ok_or_else(|| Error::InvalidInput("synthetic needs --scenario A|B|C".into()))?;
    if args.data.csv.is_some() {
        return Err(Error::InvalidInput("synthetic does not read --csv".into()));
    }
    let cfg = args.data.scenario_config(scenario, args.seed);
    let (tr, te, beta) = generate_scenario(&cfg)?;
    ensure_dir(&args.out)?;
    write_csv(&args.out.join("train.csv"), &tr, "y")?;
    write_csv(&args.out.join("test.csv"), &te, "y")?;
    let mut text = String::from("feature,beta\n");
    for (j, b) in beta.iter().enumerate() {
        text.push_str(&format!("{},{b:?}\n", tr.feature_label(j)));
    }
    write_file(&args.out.join("beta_star.csv"), text.as_bytes())?;
    write_json(
        &args.out.join("synthetic.json"),
        &json!({"command": "synthetic", "config": args, "scenario": cfg}),
    )?;
    println!("{}: train {}x{}, test {}x{}", cfg.label(), tr.n(), tr.p(), te.n(), te.p());
    println!("wrote        {}", args.out.display());
    Ok(Outcome::Done)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<Outcome> {
    let cfg = GradcheckConfig {
        family: args.family,
        draws: args.draws,
        n: args.n,
        p: args.p,
        permutations: args.t,
        seed: args.seed,
        corrupt: args.corrupt,
    };
    let rows = gradient_check(&cfg)?;
    print!("{}", format_table(&rows));
    let worst = rows
        .iter()
        .max_by(|a, b| a.worst.total_cmp(&b.worst))
        .expect("draws ≥ 1");
    println!("worst relative error {:.3e} ({} in draw {})", worst.worst, worst.worst_component, worst.draw);
    if worst.passed() {
        println!("pass: every component within {GRADCHECK_TOLERANCE:e}");
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::VerificationFailed(format!(
            "{} in draw {} has relative error {:.3e} > {GRADCHECK_TOLERANCE:e}",
            worst.worst_component, worst.draw, worst.worst
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn defaults_follow_the_reference_settings() {
        let cli = parse_ok(&["bkks", "train", "--scenario", "B"]);
        let Command::Train(args) = cli.command else { panic!() };
        let opts = args.optimizer.options(args.t);
        assert_eq!(opts, TrainOptions::default());
        assert_eq!(args.family, Family::Ridge);
    }

    #[test]
    fn benchmark_lists_parse() {
        let cli = parse_ok(&["bkks", "benchmark", "--scenario", "A", "--methods", "bkk,ridgecv", "--T", "0,1,10", "--sweep-T", "--M", "4"]);
        let Command::Benchmark(args) = cli.command else { panic!() };
        assert_eq!(args.methods, vec![Method::Bkks(Family::Ridge), Method::RidgeCv]);
        assert_eq!(args.t, vec![0, 1, 10]);
        assert_eq!(args.m, 4);
        assert!(args.sweep_t);
    }

    #[test]
    fn later_flags_win() {
        let cli = parse_ok(&["bkks", "train", "--scenario", "A", "--seed", "1", "--seed", "2"]);
        let Command::Train(args) = cli.command else { panic!() };
        assert_eq!(args.optimizer.seed, 2);
    }

    #[test]
    fn enum_flags_parse() {
        let cli = parse_ok(&["bkks", "train", "--scenario", "C", "--stop", "step-size", "--spread", "variance", "--guard", "subgradient"]);
        let Command::Train(args) = cli.command else { panic!() };
        assert_eq!(args.optimizer.stop, StopRule::StepSize);
        assert_eq!(args.optimizer.spread, GateSpread::Variance);
        assert_eq!(args.optimizer.guard, GuardPolicy::Subgradient);
        assert!(Cli::try_parse_from(["bkks", "train", "--stop", "never"]).is_err());
    }

    #[test]
    fn data_source_is_exclusive() {
        let both = DataArgs {
            csv: Some("x.csv".into()),
            scenario: Some(Scenario::A),
            ..data_args()
        };
        assert!(both.check_source().is_err());
        assert!(data_args().check_source().is_err());
    }

    #[test]
    fn echoed_config_omits_the_output_path() {
        let cli = parse_ok(&["bkks", "train", "--scenario", "B", "--out", "/tmp/somewhere"]);
        let Command::Train(args) = cli.command else { panic!() };
        let v = serde_json::to_value(&args).unwrap();
        assert!(v.get("out").is_none());
        assert_eq!(v["T"], 30);
        assert_eq!(v["scenario"], "B");
    }

    fn data_args() -> DataArgs {
        let cli = parse_ok(&["bkks", "synthetic"]);
        let Command::Synthetic(args) = cli.command else { panic!() };
        args.data
    }
}
