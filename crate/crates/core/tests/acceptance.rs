//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use pandemic_policy::harness::{random_search, random_sequence, run_experiment, Curve, ExperimentReport, ExperimentSpec, Method};
use pandemic_policy::scenario::{dfa_run, evaluate_sequence, Experiment, Scenario};
use pandemic_policy::seeded_rng;
use regex::Regex;

mod common;
use common::{full_network_gradient_error, straight_line_reward};

const SEEDS: usize = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit_secs: f64, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut out = f();
    let secs = t.elapsed().as_secs_f64();
    out.pass &= secs < limit_secs;
    out.detail = format!("{} [{secs:.2}s, limit {limit_secs}s]", out.detail);
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rewards(report: &ExperimentReport, method: Method) -> Vec<f64> {
    report
        .outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .filter(|o| o.method == method)
        .map(|o| o.best.total_reward)
        .collect()
}

fn mean_wall_time(report: &ExperimentReport, method: Method) -> f64 {
    report
        .summary
        .iter()
        .find(|(m, _)| *m == method)
        .map_or(f64::INFINITY, |(_, s)| s.mean_wall_time)
}

fn experiment(id: Experiment, methods: &[Method], dir: &std::path::Path) -> ExperimentReport {
    let spec = ExperimentSpec {
        executions: SEEDS,
        base_seed: 0,
        ..ExperimentSpec::new(id, methods.to_vec(), dir)
    };
    let report = run_experiment(&spec).expect("experiment runs");
    assert!(report.manifest.failures.is_empty(), "{:?}", report.manifest.failures);
    report
}

fn conservation() -> Outcome {
    let sc = Scenario::default();
    let mut rng = seeded_rng(2024);
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..1000 {
        let r = evaluate_sequence(&sc, &random_sequence(sc.horizon, &mut rng)).unwrap();
        for pair in r.trajectory.windows(2) {
            worst = worst.max((pair[1].total() - 1.0).abs());
            monotone &= pair[1].r >= pair[0].r && pair[1].s <= pair[0].s;
        }
    }
    check(
        worst < 1e-9 && monotone,
        format!("1000 trajectories, max |sum-1| = {worst:.2e}, monotone = {monotone}"),
    )
}

fn demo() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pandemic-policy"))
        .args(["demo-fig2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    let s60 = text
        .split_whitespace()
        .skip_while(|w| *w != "s")
        .nth(1)
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap_or(f64::NAN);
    check(out.status.success() && s60 < 0.05, format!("s(60) = {s60:.6}"))
}

fn dfa_regex() -> Outcome {
    let re = Regex::new("^0*1*2*3*0*$").unwrap();
    let mut disagreements = 0;
    for code in 0..4usize.pow(8) {
        let symbols: Vec<u8> = (0..8).map(|k| ((code >> (2 * k)) & 3) as u8).collect();
        let text: String = symbols.iter().map(|&d| char::from(b'0' + d)).collect();
        if dfa_run(&symbols).is_rejected() == re.is_match(&text) {
            disagreements += 1;
        }
    }
    check(disagreements == 0, format!("65536 strings, {disagreements} disagreements"))
}

fn reward_oracle() -> Outcome {
    let mut rng = seeded_rng(99);
    let mut mismatches = 0;
    for exp in Experiment::ALL {
        let sc = exp.scenario();
        for _ in 0..50 {
            let seq = random_sequence(sc.horizon, &mut rng);
            let got = evaluate_sequence(&sc, &seq).unwrap().total_reward;
            if got.to_bits() != straight_line_reward(&sc, seq.as_slice()).to_bits() {
                mismatches += 1;
            }
        }
    }
    check(mismatches == 0, format!("150 sequences, {mismatches} mismatches"))
}

fn gradients() -> Outcome {
    let worst = full_network_gradient_error(50);
    check(worst < 1e-3, format!("25-64-128-128-4, 50 parameters, max relative error {worst:.2e}"))
}

fn ga_progress(report: &ExperimentReport) -> Outcome {
    let mut monotone = true;
    let mut finals = Vec::new();
    for o in report.outcomes.iter().filter_map(|o| o.as_ref().ok()).filter(|o| o.method == Method::Ga) {
        if let Curve::Generations(c) = &o.curve {
            monotone &= c.windows(2).all(|w| w[1] >= w[0]);
            finals.push(*c.last().unwrap());
        }
    }
    let m = mean(&finals);
    let secs = mean_wall_time(report, Method::Ga);
    check(
        finals.len() >= SEEDS && monotone && m >= 1550.0 && secs <= 180.0,
        format!("final best per seed {finals:?}, mean {m:.2}, monotone = {monotone}, {secs:.1}s/seed"),
    )
}

fn random_band() -> Outcome {
    let sc = Experiment::One.scenario();
    let best: Vec<f64> = (0..20)
        .map(|seed| random_search(&sc, 1000, &mut seeded_rng(seed)).unwrap().total_reward)
        .collect();
    let m = mean(&best);
    check((1400.0..=1560.0).contains(&m), format!("20 repetitions of best-of-1000, mean {m:.2}"))
}

fn ordering(report: &ExperimentReport) -> Outcome {
    let (d, g, r) = (
        mean(&rewards(report, Method::Dqn)),
        mean(&rewards(report, Method::Ga)),
        mean(&rewards(report, Method::Random)),
    );
    let secs = mean_wall_time(report, Method::Dqn);
    check(
        d > g && g > r && secs <= 300.0,
        format!("mean DQN {d:.2} > GA {g:.2} > random {r:.2}; DQN {secs:.1}s/seed"),
    )
}

fn constrained(report: &ExperimentReport) -> Outcome {
    let best = &report.best.iter().find(|(m, _)| *m == Method::Dqn).unwrap().1.best;
    let (d, g, r) = (
        mean(&rewards(report, Method::Dqn)),
        mean(&rewards(report, Method::Ga)),
        mean(&rewards(report, Method::Random)),
    );
    let changes = best.actions.phase_changes();
    check(
        best.pattern_break_day.is_none()
            && best.total_reward >= 1300.0
            && changes <= 4
            && g < d
            && r < d
            && (-1950.0..=-1700.0).contains(&r),
        format!(
            "best DQN {} (break day {:?}, {changes} phase changes, {}); means DQN {d:.2}, GA {g:.2}, random {r:.2}",
            best.total_reward, best.pattern_break_day, best.actions
        ),
    )
}

fn feasibility(reports: &[&ExperimentReport]) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for report in reports {
        for o in report.outcomes.iter().filter_map(|o| o.as_ref().ok()) {
            if o.best.total_reward > 0.0 {
                checked += 1;
                if !o.best.violation_days.is_empty() {
                    bad.push(format!("{} seed {}", o.method, o.seed));
                }
            }
        }
    }
    check(bad.is_empty(), format!("{checked} positive best sequences, violations in {bad:?}"))
}

/// Reruns the GA and random parts of experiment 1 twice. The two reruns must
/// agree byte for byte, and their rows must equal those of the first run.
fn reproducible(first: &std::path::Path, a: &std::path::Path, b: &std::path::Path) -> Outcome {
    let methods = [Method::Ga, Method::Random];
    let ra = experiment(Experiment::One, &methods, a);
    let rb = experiment(Experiment::One, &methods, b);
    let read = |r: &ExperimentReport| std::fs::read_to_string(r.manifest_path.with_file_name("summary.csv")).unwrap();
    let (sa, sb) = (read(&ra), read(&rb));
    let original: String = std::fs::read_to_string(first.join("summary.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("dqn,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let identical = sa.as_bytes() == sb.as_bytes();
    check(
        identical && sa == original,
        format!(
            "{} bytes, reruns identical = {identical}, match first run = {}",
            sa.len(),
            sa == original
        ),
    )
}

fn main() -> ExitCode {
    let dirs: Vec<_> = (0..5).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    report(1, "conservation and purity", timed(10.0, conservation));
    report(2, "unmitigated epidemic", timed(1.0, demo));
    report(3, "automaton vs regex", timed(5.0, dfa_regex));
    report(4, "reward oracle", timed(10.0, reward_oracle));
    report(5, "gradient check", timed(30.0, gradients));

    let exp1 = experiment(Experiment::One, &Method::ALL, dirs[0].path());
    report(6, "GA progress and elitism", ga_progress(&exp1));
    report(7, "random baseline band", timed(60.0, random_band));
    report(8, "method ordering", ordering(&exp1));

    let exp2 = experiment(Experiment::Two, &Method::ALL, dirs[1].path());
    let exp3 = experiment(Experiment::Three, &Method::ALL, dirs[2].path());
    report(9, "constrained experiment", constrained(&exp3));
    report(10, "feasibility of best sequences", feasibility(&[&exp1, &exp2, &exp3]));
    report(11, "reproducibility", reproducible(dirs[0].path(), dirs[3].path(), dirs[4].path()));

    let failed: Vec<usize> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
