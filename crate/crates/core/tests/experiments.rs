use std::path::Path;

use lasso_exact::experiments::{
    run_coverage_experiment, run_fixed_point_validation, run_qq_experiment, run_width_threshold_experiment, ExperimentConfig,
    FixedPointMethod, Placement,
};
use lasso_exact::Error;

const SMALL: &str = r#"
seed = 5
n_sim = 40
q = [0.05, 0.5]

[instance]
p = 40
n = 20
s = 8
mu = 5.0
sigma = 1.0
lambda = 2.0
normalization = "by_p"
target = 7

[covariance]
kind = "ar"
rho = 0.5
"#;

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(SMALL).unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn coverage_csvs_identical_across_runs_and_threads() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    in_pool(1, || run_coverage_experiment(&cfg).unwrap().write(a.path(), &cfg).unwrap());
    in_pool(3, || run_coverage_experiment(&cfg).unwrap().write(b.path(), &cfg).unwrap());
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert!(fa.len() >= 2);
    assert_eq!(fa, fb);
    assert!(a.path().join("summary.json").exists());
}

#[test]
fn results_csv_layout() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    run_qq_experiment(&cfg).unwrap().write(dir.path(), &cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "schema_version,experiment,replica,coordinate,group,metric,value");
    for name in ["qq.csv", "histogram.csv"] {
        let t = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(t.starts_with("schema_version,"), "{name}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["master_seed"], 5);
}

#[test]
fn different_seed_changes_output() {
    let a = run_qq_experiment(&small()).unwrap();
    let mut cfg = small();
    cfg.seed = 6;
    let b = run_qq_experiment(&cfg).unwrap();
    assert_ne!(a.results.values("adjusted", None), b.results.values("adjusted", None));
}

#[test]
fn noiseless_overfit_replicas_are_flagged() {
    let mut cfg = small();
    cfg.instance.sigma = 0.0;
    cfg.instance.lambda = 1e-10;
    cfg.instance.n = 80;
    cfg.instance.normalization = lasso_exact::model::Normalization::ByN;
    cfg.n_sim = 5;
    let run = run_qq_experiment(&cfg).unwrap();
    assert_eq!(run.flagged.len(), 5);
    assert_eq!(run.summary.replicas_used, 0);
}

#[test]
fn median_level_coverage_near_half() {
    let mut cfg = small();
    cfg.n_sim = 400;
    let run = run_coverage_experiment(&cfg).unwrap();
    let lvl = run.summary.at(0.5).unwrap();
    for c in [lvl.coverage_d, lvl.coverage_loo] {
        assert!((c - 0.5).abs() < 0.08, "coverage {c}");
    }
    let lvl = run.summary.at(0.05).unwrap();
    assert!(lvl.mean_width_d > 0.0 && lvl.mean_width_loo > 0.0);
}

#[test]
fn config_errors() {
    let mut cfg = small();
    cfg.instance.target = None;
    assert!(matches!(run_coverage_experiment(&cfg), Err(Error::Config(_))));

    assert!(matches!(run_width_threshold_experiment(&small()), Err(Error::Config(_))));

    let bad = SMALL.replace("n_sim = 40", "n_sim = 40\nbogus = 1");
    assert!(ExperimentConfig::from_toml_str(&bad).is_err());

    let bad = SMALL.replace("target = 7", "target = 40");
    assert!(ExperimentConfig::from_toml_str(&bad).is_err());

    let bad = SMALL.replace("q = [0.05, 0.5]", "q = [1.5]");
    assert!(ExperimentConfig::from_toml_str(&bad).is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small();
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back.to_toml_string(), cfg.to_toml_string());
}

#[test]
fn target_follows_activity_flag() {
    let mut cfg = small();
    assert_eq!(cfg.support_pattern()[7], 0.0);
    cfg.instance.target_active = true;
    assert_eq!(cfg.support_pattern()[7], 1.0);
    assert_eq!(cfg.support_pattern().iter().filter(|v| **v != 0.0).count(), 8);
    cfg.instance.placement = Placement::First;
    cfg.instance.target = None;
    let pat = cfg.support_pattern();
    assert!((0..8).all(|j| pat[j] != 0.0));
}

#[test]
fn fixpoint_identity_monte_carlo_agrees_with_closed_form() {
    let text = r#"
seed = 3
n_sim = 4

[instance]
p = 200
n = 100
s = 20
mu = 3.0
sigma = 1.0
lambda = 1.5
normalization = "by_n"

[covariance]
kind = "identity"

[fixed_point]
n_mc = 400
n_mc_max = 1600
fp_tol = 1e-4
"#;
    let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let exact = run_fixed_point_validation(&cfg).unwrap().summary;
    assert_eq!(exact.method, "closed_form");
    cfg.fixed_point_method = FixedPointMethod::MonteCarlo;
    let mc = run_fixed_point_validation(&cfg).unwrap().summary;
    assert_eq!(mc.method, "monte_carlo");
    assert!((mc.tau_star - exact.tau_star).abs() < 4.0 * mc.se_tau + 1e-3);
    assert!((mc.zeta_star - exact.zeta_star).abs() < 4.0 * mc.se_zeta + 1e-3);
}

#[test]
fn width_cells_cover_grid_and_null_risk_ignores_placement() {
    let text = r#"
seed = 2
n_sim = 6

[instance]
p = 60
n = 30
s = 12
mu = 1.0
sigma = 1.0
lambda = 2.0
normalization = "by_p"

[covariance]
kind = "ar"
rho = 0.5

[width]
n_samples = 30

[grid]
n_values = [20, 50]
mu_values = [0.0, 4.0]
"#;
    let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let a = run_width_threshold_experiment(&cfg).unwrap().summary;
    assert_eq!(a.cells.len(), 4);
    assert!(a.width_median > 0.0 && a.width_median < 1.0);
    cfg.instance.placement = Placement::First;
    let b = run_width_threshold_experiment(&cfg).unwrap().summary;
    for n in [20, 50] {
        let (ca, cb) = (a.cell(n, 0.0).unwrap(), b.cell(n, 0.0).unwrap());
        assert_eq!(ca.median_risk.to_bits(), cb.median_risk.to_bits());
        assert!(a.cell(n, 4.0).unwrap().median_risk > ca.median_risk);
    }
}
