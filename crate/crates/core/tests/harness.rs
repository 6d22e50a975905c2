use std::path::Path;

use pandemic_policy::harness::csv::{read_summary_csv, read_trajectory_csv, total_reward_from_csv};
use pandemic_policy::harness::{run_experiment, ExperimentSpec, Method, RunConfig, RunManifest};
use pandemic_policy::scenario::Experiment;

fn quick_config(exp: Experiment) -> RunConfig {
    let mut cfg = RunConfig::for_experiment(exp);
    cfg.ga.generations = 15;
    cfg.ga.population_size = 20;
    cfg.dqn.episodes = 2;
    cfg.dqn.hidden_sizes = vec![16];
    cfg.random_samples = 40;
    cfg
}

fn quick_spec(exp: Experiment, out: &Path) -> ExperimentSpec {
    ExperimentSpec {
        executions: 3,
        base_seed: 7,
        config: quick_config(exp),
        jobs: Some(2),
        ..ExperimentSpec::new(exp, Method::ALL.to_vec(), out)
    }
}

fn population_stats(v: &[f64]) -> (f64, f64, f64, f64) {
    let n = v.len() as f64;
    let mut sum = 0.0;
    for x in v {
        sum += x;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for x in v {
        sq += (x - mean) * (x - mean);
    }
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    (mean, max, min, (sq / n).sqrt())
}

fn assert_well_formed_svg(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

#[test]
fn experiment_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = quick_spec(Experiment::Two, dir.path());
    let report = run_experiment(&spec).unwrap();
    let out = dir.path();

    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seeds, vec![7, 8, 9]);
    assert_eq!(manifest.runs.len(), 9);
    assert!(manifest.failures.is_empty());
    assert!(manifest.started_unix <= manifest.finished_unix);
    assert_eq!(manifest.config, spec.config);
    for f in manifest.files.iter().chain(manifest.runs.iter().flat_map(|r| &r.files)) {
        assert!(f.exists(), "{} missing", f.display());
    }

    // Per-run trajectory files reproduce the reported bests, and the summary
    // can be rebuilt from them.
    let summary = read_summary_csv(&out.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 3);
    for (name, avg, max, min, std, runs) in summary {
        let method: Method = name.parse().unwrap();
        let rewards: Vec<f64> = (0..3)
            .map(|j| total_reward_from_csv(&out.join(&name).join(format!("run-{j:03}")).join("trajectory.csv")).unwrap())
            .collect();
        let recorded: Vec<f64> = manifest
            .runs
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.best_reward.unwrap())
            .collect();
        assert_eq!(rewards, recorded);
        assert_eq!((avg, max, min, std), population_stats(&rewards));
        assert_eq!(runs, 3);
        assert!(min <= avg && avg <= max);
        assert_eq!(total_reward_from_csv(&out.join(&name).join("best_trajectory.csv")).unwrap(), max);
    }
    assert_eq!(report.summary.len(), 3);

    for name in ["summary.svg", "dqn/best_infectious.svg", "ga/best_actions.svg", "random/run-000/infectious.svg"] {
        assert_well_formed_svg(&out.join(name));
    }
    let ga_curve = std::fs::read_to_string(out.join("ga/run-001/curve.csv")).unwrap();
    assert_eq!(ga_curve.lines().count(), 1 + 16);
    let dqn_curve = std::fs::read_to_string(out.join("dqn/run-001/curve.csv")).unwrap();
    assert!(dqn_curve.starts_with("episode,greedy_reward\n0,"));
}

#[test]
fn same_seed_gives_identical_summary_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut spec_b = quick_spec(Experiment::Three, b.path());
    spec_b.jobs = Some(1);
    run_experiment(&quick_spec(Experiment::Three, a.path())).unwrap();
    run_experiment(&spec_b).unwrap();
    for f in ["summary.csv", "runs.csv", "ga/best_trajectory.csv", "dqn/run-002/trajectory.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn single_execution_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        executions: 1,
        methods: vec![Method::Random],
        ..quick_spec(Experiment::One, dir.path())
    };
    let report = run_experiment(&spec).unwrap();
    let (_, s) = report.summary[0];
    assert_eq!((s.avg, s.std, s.runs), (s.max, 0.0, 1));
    assert_eq!(s.min, s.max);
}

#[test]
fn failed_runs_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = quick_spec(Experiment::One, dir.path());
    spec.methods = vec![Method::Random];
    spec.config.scenario.params.beta = 40.0;
    let err = run_experiment(&spec).unwrap_err();
    assert!(err.to_string().contains("every run failed"), "{err}");

    let bad = ExperimentSpec {
        executions: 0,
        ..quick_spec(Experiment::One, dir.path())
    };
    assert!(run_experiment(&bad).is_err());
}

#[test]
fn best_plot_keeps_demand_under_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = quick_spec(Experiment::One, dir.path());
    spec.methods = vec![Method::Ga];
    spec.config.ga.generations = 60;
    let report = run_experiment(&spec).unwrap();
    let best = &report.best[0].1.best;
    assert!(best.total_reward > 0.0);
    assert!(best.violation_days.is_empty());

    // Within the SVG the y axis points down: the demand polyline must never
    // be drawn above (smaller y than) the capacity polyline.
    let text = std::fs::read_to_string(dir.path().join("ga/best_infectious.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let line = |label: &str| -> Vec<(f64, f64)> {
        let node = doc
            .descendants()
            .find(|n| n.attribute("data-series") == Some(label))
            .unwrap();
        node.attribute("points")
            .unwrap()
            .split_whitespace()
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect()
    };
    let demand = line("ICU demand");
    let capacity = line("ICU beds");
    assert_eq!(demand.len(), 200);
    for (d, c) in demand.iter().zip(&capacity) {
        assert_eq!(d.0, c.0);
        assert!(d.1 >= c.1, "demand above capacity at x = {}", d.0);
    }

    let rows = read_trajectory_csv(&dir.path().join("ga/best_trajectory.csv")).unwrap();
    assert!(rows.iter().all(|r| r.icu_demand <= r.beds));
}
