use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pandemic_policy::harness::{self, ExperimentSpec, Method, RunConfig};
use pandemic_policy::scenario::{evaluate_sequence, ActionSequence, Experiment};

#[derive(Parser)]
#[command(name = "pandemic-policy", version, about = "Confinement policy search on a SEIR epidemic model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one action sequence and write its trajectory and plots.
    Simulate {
        /// Scenario config file (defaults to experiment 1).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Actions as digits 0-3, comma separated or not, or a file holding them.
        #[arg(long)]
        actions: String,
        #[arg(long, env = "PANDEMIC_POLICY_OUT")]
        out: PathBuf,
    },
    /// Run one optimizer once.
    Optimize {
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
        experiment: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "PANDEMIC_POLICY_OUT")]
        out: PathBuf,
    },
    /// Seeded multi-run statistics for one or more methods.
    Experiment {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        id: u8,
        /// `dqn`, `ga`, `random`, a comma-separated list, or `all`.
        #[arg(long, default_value = "all")]
        method: String,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Base seed; run j uses seed + j.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Parallel workers (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Write measured wall times into summary.csv.
        #[arg(long)]
        timing: bool,
        #[arg(long, env = "PANDEMIC_POLICY_OUT")]
        out: PathBuf,
    },
    /// Unmitigated reference epidemic over 60 days.
    DemoFig2 {
        #[arg(long, env = "PANDEMIC_POLICY_OUT")]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, experiment: Experiment) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(harness::parse_config_for(p, Some(experiment))?),
        None => Ok(RunConfig::for_experiment(experiment)),
    }
}

fn parse_actions(text: &str) -> Result<ActionSequence> {
    let source = if Path::new(text).is_file() {
        std::fs::read_to_string(text).with_context(|| format!("reading {text}"))?
    } else {
        text.to_string()
    };
    let mut actions = Vec::new();
    for c in source.chars().filter(|c| !c.is_whitespace() && *c != ',') {
        match c.to_digit(10) {
            Some(d) if d < 4 => actions.push(d as u8),
            _ => bail!("invalid action `{c}` (expected a digit 0-3)"),
        }
    }
    Ok(ActionSequence::new(actions)?)
}

fn parse_methods(text: &str) -> Result<Vec<Method>> {
    if text.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut methods = Vec::new();
    for part in text.split(',') {
        let m: Method = part.parse()?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, actions, out } => {
            let cfg = match &config {
                Some(p) => harness::parse_config(p)?,
                None => RunConfig::default(),
            };
            let actions = parse_actions(&actions)?;
            let result = evaluate_sequence(&cfg.scenario, &actions)?;
            let outcome = harness::RunOutcome {
                method: Method::Random,
                seed: 0,
                best: result,
                curve: harness::Curve::None,
                wall_time_secs: 0.0,
            };
            harness::write_run_artifacts(&cfg.scenario, &outcome, &out)?;
            let r = &outcome.best;
            println!(
                "total_reward {} violation_days {} pattern_break_day {} phase_changes {}",
                r.total_reward,
                r.violation_days.len(),
                r.pattern_break_day.map_or("none".to_string(), |d| d.to_string()),
                r.actions.phase_changes()
            );
        }
        Command::Optimize {
            method,
            experiment,
            config,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_deref(), Experiment::from_id(experiment)?)?;
            let outcome = harness::optimize(method, &cfg, seed)?;
            harness::write_run_artifacts(&cfg.scenario, &outcome, &out)?;
            let path = out.join("result.json");
            std::fs::write(&path, serde_json::to_string_pretty(&outcome)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            let r = &outcome.best;
            println!(
                "method {method} experiment {experiment} seed {seed} best {} violation_days {} \
                 pattern_break_day {} phase_changes {} time_sec {:.2}",
                r.total_reward,
                r.violation_days.len(),
                r.pattern_break_day.map_or("none".to_string(), |d| d.to_string()),
                r.actions.phase_changes(),
                outcome.wall_time_secs
            );
            println!("actions {}", r.actions);
        }
        Command::Experiment {
            id,
            method,
            runs,
            seed,
            config,
            jobs,
            timing,
            out,
        } => {
            let experiment = Experiment::from_id(id)?;
            let spec = ExperimentSpec {
                executions: runs,
                base_seed: seed,
                config: load_config(config.as_deref(), experiment)?,
                jobs,
                timing,
                ..ExperimentSpec::new(experiment, parse_methods(&method)?, out)
            };
            let report = harness::run_experiment(&spec)?;
            print!("{}", std::fs::read_to_string(spec.output_dir.join("summary.csv"))?);
            for f in &report.manifest.failures {
                eprintln!("failed: {f}");
            }
        }
        Command::DemoFig2 { out } => {
            let (traj, _) = harness::demo_fig2(&out)?;
            let last = traj.last().expect("non-empty trajectory");
            println!(
                "day {} s {:.6} e {:.6} i {:.6} r {:.6}",
                traj.len() - 1,
                last.s,
                last.e,
                last.i,
                last.r
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
