//! Experiment plumbing: the random baseline, single optimization runs,
//! seeded multi-run experiments and their CSV/SVG/JSON artifacts.

pub mod config;
pub mod csv;
pub mod stats;
pub mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dqn::{self, GreedyEval};
use crate::error::{Error, Result};
use crate::ga;
use crate::scenario::{evaluate_sequence, total_reward, ActionSequence, EvaluationResult, Experiment, Scenario, NUM_ACTIONS};
use crate::seir::{simulate_trajectory, CompartmentState, EpidemicParams};

pub use config::{parse_config, parse_config_for, parse_config_str, RunConfig};
pub use csv::{write_trajectory_csv, TRAJECTORY_HEADER};
pub use stats::SummaryStats;
pub use svg::render_plots;

/// A uniformly random action sequence of length `horizon`.
pub fn random_sequence<R: Rng + ?Sized>(horizon: usize, rng: &mut R) -> ActionSequence {
    let actions = (0..horizon).map(|_| rng.random_range(0..NUM_ACTIONS as u8)).collect();
    ActionSequence::new(actions).expect("actions drawn from the valid range")
}

/// Best of `samples` uniformly random sequences; the first one wins ties.
pub fn random_search<R: Rng + ?Sized>(scenario: &Scenario, samples: usize, rng: &mut R) -> Result<EvaluationResult> {
    if samples == 0 {
        return Err(Error::InvalidConfig("random.samples must be at least 1".into()));
    }
    let mut best: Option<(f64, ActionSequence)> = None;
    for _ in 0..samples {
        let candidate = random_sequence(scenario.horizon, rng);
        let reward = total_reward(scenario, &candidate)?;
        if best.as_ref().is_none_or(|(b, _)| reward > *b) {
            best = Some((reward, candidate));
        }
    }
    let (_, actions) = best.expect("at least one sample");
    evaluate_sequence(scenario, &actions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dqn,
    Ga,
    Random,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dqn, Method::Ga, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dqn => "dqn",
            Method::Ga => "ga",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dqn" | "dql" => Ok(Method::Dqn),
            "ga" => Ok(Method::Ga),
            "random" => Ok(Method::Random),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}` (expected dqn, ga or random)"))),
        }
    }
}

/// Progress record of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Curve {
    /// Best fitness after each generation, generation 0 first.
    Generations(Vec<f64>),
    /// Greedy evaluations during training.
    Evaluations(Vec<GreedyEval>),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub method: Method,
    pub seed: u64,
    pub best: EvaluationResult,
    pub curve: Curve,
    pub wall_time_secs: f64,
}

/// One optimization run of `method` with the given seed. The seed replaces
/// whatever seed `config` carries.
pub fn optimize(method: Method, config: &RunConfig, seed: u64) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let (best, curve) = match method {
        Method::Ga => {
            let cfg = ga::GaConfig {
                seed,
                ..config.ga.clone()
            };
            let stats = ga::run_ga(&cfg, &config.scenario)?;
            (stats.best, Curve::Generations(stats.best_fitness_per_generation))
        }
        Method::Dqn => {
            let cfg = dqn::DqnConfig {
                seed,
                ..config.dqn.clone()
            };
            let report = dqn::train(&cfg, &config.scenario)?;
            (report.best, Curve::Evaluations(report.eval_curve))
        }
        Method::Random => {
            let mut rng = crate::seeded_rng(seed);
            (random_search(&config.scenario, config.random_samples, &mut rng)?, Curve::None)
        }
    };
    Ok(RunOutcome {
        method,
        seed,
        best,
        curve,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

fn curve_csv(curve: &Curve) -> Option<String> {
    match curve {
        Curve::Generations(v) => Some(
            std::iter::once("generation,best_fitness".to_string())
                .chain(v.iter().enumerate().map(|(g, f)| format!("{g},{f:?}")))
                .map(|l| l + "\n")
                .collect(),
        ),
        Curve::Evaluations(v) => Some(
            std::iter::once("episode,greedy_reward".to_string())
                .chain(v.iter().map(|e| format!("{},{:?}", e.episode, e.total_reward)))
                .map(|l| l + "\n")
                .collect(),
        ),
        Curve::None => None,
    }
}

fn bed_series(scenario: &Scenario) -> Result<Vec<f64>> {
    (1..=scenario.horizon).map(|d| scenario.beds_fraction(d)).collect()
}

/// Writes `trajectory.csv`, `curve.csv` (when the method has one) and the
/// two per-sequence plots into `dir`. Returns the paths written.
pub fn write_run_artifacts(scenario: &Scenario, outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let trajectory = dir.join("trajectory.csv");
    write_trajectory_csv(scenario, &outcome.best, &trajectory)?;
    files.push(trajectory);
    if let Some(body) = curve_csv(&outcome.curve) {
        let path = dir.join("curve.csv");
        csv::write_file(&path, &body)?;
        files.push(path);
    }
    files.extend(render_plots(
        &outcome.best,
        &bed_series(scenario)?,
        scenario.icu_fraction,
        None,
        &dir.join(""),
    )?);
    Ok(files)
}

/// A batch of seeded runs on one canonical experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: Experiment,
    pub methods: Vec<Method>,
    /// Runs per method; run `j` uses seed `base_seed + j`.
    pub executions: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Scenario and optimizer settings; `RunConfig::for_experiment(id)` by default.
    pub config: RunConfig,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Put measured wall times into `summary.csv` instead of `---`.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(id: Experiment, methods: Vec<Method>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            id,
            methods,
            executions: 100,
            base_seed: 0,
            output_dir: output_dir.into(),
            config: RunConfig::for_experiment(id),
            jobs: None,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        if self.executions == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        if self.config.experiment != self.id {
            return Err(Error::InvalidConfig(format!(
                "config is for experiment {}, spec asks for {}",
                self.config.experiment, self.id
            )));
        }
        self.config.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    /// `None` for failed runs.
    pub best_reward: Option<f64>,
    pub error: Option<String>,
    pub wall_time_secs: f64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub experiment: Experiment,
    pub methods: Vec<Method>,
    pub executions: usize,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub config: RunConfig,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub runs: Vec<RunRecord>,
    /// Completed runs per method, in `methods` order.
    pub completed: Vec<(Method, usize)>,
    pub failures: Vec<String>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Vec<(Method, SummaryStats)>,
    /// Best sequence of each method over its runs.
    pub best: Vec<(Method, RunOutcome)>,
    pub outcomes: Vec<Result<RunOutcome, String>>,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("method,run,seed,best_reward,status\n");
    for r in records {
        let reward = r.best_reward.map(|v| format!("{v:?}")).unwrap_or_default();
        let status = if r.error.is_some() { "failed" } else { "ok" };
        out.push_str(&format!("{},{},{},{reward},{status}\n", r.method, r.run, r.seed));
    }
    out
}

fn timing_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("method,run,seed,wall_time_sec\n");
    for r in records {
        out.push_str(&format!("{},{},{},{:?}\n", r.method, r.run, r.seed, r.wall_time_secs));
    }
    out
}

/// Runs every (method, seed) pair, writes the artifacts and aggregates the
/// best rewards per method. Failed runs are listed in the manifest and left
/// out of the statistics.
///
/// Layout of `output_dir`: `summary.csv`, `runs.csv`, `timing.csv`,
/// `manifest.json`, `summary.svg`, and per method `<method>/best_*` plus
/// `<method>/run-NNN/`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let out = &spec.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let started_unix = unix_now();

    let jobs: Vec<(Method, usize)> = spec
        .methods
        .iter()
        .flat_map(|&m| (0..spec.executions).map(move |j| (m, j)))
        .collect();
    let seeds: Vec<u64> = (0..spec.executions).map(|j| spec.base_seed + j as u64).collect();

    let run_one = |&(method, j): &(Method, usize)| -> (RunRecord, Result<RunOutcome, String>) {
        let seed = seeds[j];
        let run_started = unix_now();
        let dir = out.join(method.name()).join(format!("run-{j:03}"));
        let result = optimize(method, &spec.config, seed)
            .and_then(|o| write_run_artifacts(&spec.config.scenario, &o, &dir).map(|files| (o, files)));
        let finished = unix_now();
        match result {
            Ok((outcome, files)) => (
                RunRecord {
                    method,
                    run: j,
                    seed,
                    best_reward: Some(outcome.best.total_reward),
                    error: None,
                    wall_time_secs: outcome.wall_time_secs,
                    started_unix: run_started,
                    finished_unix: finished,
                    files,
                },
                Ok(outcome),
            ),
            Err(e) => (
                RunRecord {
                    method,
                    run: j,
                    seed,
                    best_reward: None,
                    error: Some(e.to_string()),
                    wall_time_secs: finished - run_started,
                    started_unix: run_started,
                    finished_unix: finished,
                    files: Vec::new(),
                },
                Err(e.to_string()),
            ),
        }
    };

    let results: Vec<(RunRecord, Result<RunOutcome, String>)> = match spec.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start {n} workers: {e}")))?
            .install(|| jobs.par_iter().map(run_one).collect()),
        None => jobs.par_iter().map(run_one).collect(),
    };
    let (records, outcomes): (Vec<RunRecord>, Vec<Result<RunOutcome, String>>) = results.into_iter().unzip();

    let mut files = Vec::new();
    let mut summary = Vec::new();
    let mut best = Vec::new();
    let mut failures = Vec::new();
    let mut completed = Vec::new();
    for &method in &spec.methods {
        let mine: Vec<&RunOutcome> = records
            .iter()
            .zip(&outcomes)
            .filter(|(r, _)| r.method == method)
            .filter_map(|(_, o)| o.as_ref().ok())
            .collect();
        completed.push((method, mine.len()));
        for r in records.iter().filter(|r| r.method == method) {
            if let Some(e) = &r.error {
                failures.push(format!("{method} run {} (seed {}): {e}", r.run, r.seed));
            }
        }
        if mine.is_empty() {
            continue;
        }
        let rewards: Vec<f64> = mine.iter().map(|o| o.best.total_reward).collect();
        let times: Vec<f64> = mine.iter().map(|o| o.wall_time_secs).collect();
        summary.push((method, SummaryStats::from_samples(&rewards, &times)?));

        let top = mine
            .iter()
            .copied()
            .reduce(|a, b| if b.best.total_reward > a.best.total_reward { b } else { a })
            .expect("non-empty");
        let dir = out.join(method.name());
        let path = dir.join("best_trajectory.csv");
        write_trajectory_csv(&spec.config.scenario, &top.best, &path)?;
        files.push(path);
        files.extend(render_plots(
            &top.best,
            &bed_series(&spec.config.scenario)?,
            spec.config.scenario.icu_fraction,
            None,
            &dir.join("best_"),
        )?);
        best.push((method, top.clone()));
    }
    if summary.is_empty() {
        return Err(Error::Empty(format!("every run failed: {}", failures.join("; "))));
    }

    let named: Vec<(String, SummaryStats)> = summary.iter().map(|(m, s)| (m.to_string(), *s)).collect();
    for (name, body) in [
        ("summary.csv", csv::summary_csv(&named, spec.timing)),
        ("runs.csv", runs_csv(&records)),
        ("timing.csv", timing_csv(&records)),
        ("summary.svg", svg::summary_chart(&named)?),
    ] {
        let path = out.join(name);
        csv::write_file(&path, &body)?;
        files.push(path);
    }

    let manifest_path = out.join("manifest.json");
    files.push(manifest_path.clone());
    let manifest = RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: spec.id,
        methods: spec.methods.clone(),
        executions: spec.executions,
        base_seed: spec.base_seed,
        seeds,
        config: spec.config.clone(),
        started_unix,
        finished_unix: unix_now(),
        runs: records,
        completed,
        failures,
        files,
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize manifest: {e}")))?;
    csv::write_file(&manifest_path, &(body + "\n"))?;

    Ok(ExperimentReport {
        summary,
        best,
        outcomes,
        manifest,
        manifest_path,
    })
}

/// Parameters of the unmitigated reference epidemic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoSetup {
    pub params: EpidemicParams,
    pub population: f64,
    pub initial_infectious: f64,
    pub days: usize,
}

impl Default for DemoSetup {
    fn default() -> Self {
        DemoSetup {
            params: EpidemicParams::new(0.2, 2.0, 0.2).expect("valid demo parameters"),
            population: 50_000_000.0,
            initial_infectious: 10_000.0,
            days: 60,
        }
    }
}

/// Unmitigated run of `setup`; entry 0 is the initial state.
pub fn demo_trajectory(setup: &DemoSetup) -> Result<Vec<CompartmentState>> {
    let initial = CompartmentState::from_counts(setup.population, 0.0, setup.initial_infectious, 0.0)?;
    simulate_trajectory(&initial, &setup.params, &vec![1.0; setup.days])
}

/// Writes `demo_trajectory.csv` and `demo_seir.svg` into `dir`.
pub fn demo_fig2(dir: &Path) -> Result<(Vec<CompartmentState>, Vec<PathBuf>)> {
    let traj = demo_trajectory(&DemoSetup::default())?;
    let mut body = String::from("day,s,e,i,r\n");
    for (day, st) in traj.iter().enumerate() {
        body.push_str(&format!(
            "{day},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            st.s, st.e, st.i, st.r
        ));
    }
    let csv_path = dir.join("demo_trajectory.csv");
    csv::write_file(&csv_path, &body)?;

    let series = |label: &str, f: fn(&CompartmentState) -> f64| svg::Series {
        label: label.into(),
        values: traj.iter().map(|s| f(s) * 100.0).collect(),
        step: false,
    };
    let chart = svg::DayChart {
        title: "Unmitigated SEIR epidemic".into(),
        y_label: "% of population".into(),
        first_day: 0,
        series: vec![
            series("susceptible", |s| s.s),
            series("exposed", |s| s.e),
            series("infectious", |s| s.i),
            series("recovered", |s| s.r),
        ],
        y_range: Some((0.0, 100.0)),
        y_ticks: None,
    };
    let svg_path = dir.join("demo_seir.svg");
    csv::write_file(&svg_path, &chart.render()?)?;
    Ok((traj, vec![csv_path, svg_path]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn single_sample_is_one_random_sequence() {
        let sc = Experiment::One.scenario();
        let best = random_search(&sc, 1, &mut seeded_rng(5)).unwrap();
        let seq = random_sequence(sc.horizon, &mut seeded_rng(5));
        assert_eq!(best, evaluate_sequence(&sc, &seq).unwrap());
    }

    #[test]
    fn random_search_is_seeded_and_takes_the_max() {
        let sc = Experiment::One.scenario();
        let a = random_search(&sc, 50, &mut seeded_rng(11)).unwrap();
        let b = random_search(&sc, 50, &mut seeded_rng(11)).unwrap();
        assert_eq!(a, b);
        let mut rng = seeded_rng(11);
        let max = (0..50)
            .map(|_| total_reward(&sc, &random_sequence(sc.horizon, &mut rng)).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.total_reward, max);
        assert!(random_search(&sc, 0, &mut rng).is_err());
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("sa".parse::<Method>().is_err());
    }

    #[test]
    fn demo_epidemic_burns_through() {
        let traj = demo_trajectory(&DemoSetup::default()).unwrap();
        assert_eq!(traj.len(), 61);
        assert!(traj[60].s < 0.05, "s(60) = {}", traj[60].s);
    }
}
