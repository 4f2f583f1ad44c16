//! Library-level runs across modules.

use bkks::eval::{mann_whitney_exact, mann_whitney_normal, ols_fit, DataSource};
use bkks::optimizer::WorkCounts;
use bkks::{
    generate_scenario, predict, r2_score, run_benchmark, train, BenchmarkConfig, Family, Method, Scenario, ScenarioConfig,
    TrainOptions,
};

fn small_b(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Scenario::B, seed);
    cfg.p = 20;
    cfg.n_test = 300;
    cfg
}

#[test]
fn families_train_and_predict_on_small_sparse_problem() {
    let (tr, te, _) = generate_scenario(&small_b(3)).unwrap();
    let (beta, meta) = ols_fit(&tr).unwrap();
    let ols = r2_score(&te.y, &predict(&beta, &te.x, &meta).unwrap()).unwrap();
    let mut scores = Vec::new();
    for family in Family::ALL {
        let fit = train(family, &tr, &TrainOptions::default()).unwrap();
        let r2 = r2_score(&te.y, &fit.predict(&te.x).unwrap()).unwrap();
        assert!(fit.converged && r2 > 0.0, "{family}: {r2}");
        assert!(fit.final_value() < fit.criterion_trace[0]);
        scores.push(r2);
    }
    // the ridge path reaches OLS quality when p is small next to n
    assert!(scores[0] > ols - 0.05, "{scores:?} vs ols {ols}");
}

#[test]
fn work_counts_add_up() {
    let (tr, _, _) = generate_scenario(&small_b(4)).unwrap();
    let opts = TrainOptions {
        permutations: 7,
        ..TrainOptions::default()
    };
    let fit = train(Family::SparseRidge, &tr, &opts).unwrap();
    let WorkCounts { setup_fits, loop_fits, retry_fits } = fit.work;
    assert_eq!(setup_fits, 8);
    assert_eq!(loop_fits, fit.iterations * 8);
    assert_eq!(fit.work.total(), setup_fits + loop_fits + retry_fits);
}

#[test]
fn benchmark_flags_winners_consistently() {
    let methods = vec![Method::Bkks(Family::Ridge), Method::RidgeCv, Method::Ols];
    let cfg = BenchmarkConfig::new(methods, DataSource::Scenario(small_b(0)), 6, 9);
    let report = run_benchmark(&cfg).unwrap();
    assert_eq!(report.scores.len(), 3);
    let best = report
        .methods
        .iter()
        .max_by(|a, b| report.mean_score(a).unwrap().total_cmp(&report.mean_score(b).unwrap()))
        .unwrap();
    assert!(report.winners.contains(best));
    assert_eq!(report.mw.len(), 3);
    assert_eq!(run_benchmark(&cfg).unwrap().scores, report.scores);
}

#[test]
fn mann_whitney_paths_agree_on_separated_samples() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
    let e = mann_whitney_exact(&a, &b).unwrap();
    let n = mann_whitney_normal(&a, &b).unwrap();
    assert_eq!(e.u, 0.0);
    assert!(e.p_value < 0.01 && n.p_value < 0.01);
}
