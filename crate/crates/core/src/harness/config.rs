//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored; a trailing `# ...`
//! after a value is a comment too. Keys not present keep the defaults of the
//! selected experiment (`experiment = 1` unless given).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dqn::DqnConfig;
use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::scenario::{Experiment, Scenario, NUM_ACTIONS};
use crate::seir::CompartmentState;

pub const DEFAULT_RANDOM_SAMPLES: usize = 1000;

/// Scenario plus the settings of all three optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub scenario: Scenario,
    pub ga: GaConfig,
    pub dqn: DqnConfig,
    pub random_samples: usize,
}

impl RunConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        let budget = match experiment {
            Experiment::Three => 2000,
            _ => 1000,
        };
        RunConfig {
            experiment,
            scenario: experiment.scenario(),
            ga: GaConfig {
                generations: budget,
                ..GaConfig::default()
            },
            dqn: DqnConfig {
                episodes: budget,
                ..DqnConfig::default()
            },
            random_samples: DEFAULT_RANDOM_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.ga.validate()?;
        self.dqn.validate()?;
        if self.random_samples == 0 {
            return Err(Error::InvalidConfig("random.samples must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_experiment(Experiment::One)
    }
}

/// Every key the parser accepts.
pub fn known_keys() -> Vec<String> {
    let mut keys: Vec<String> = [
        "experiment",
        "epidemic.alpha",
        "epidemic.beta",
        "epidemic.gamma",
        "population.n",
        "population.e0",
        "beds.start",
        "beds.end",
        "theta.start",
        "theta.end",
        "icu.fraction",
        "penalty.bed",
        "penalty.pattern",
        "pattern.enabled",
        "horizon",
        "ga.population_size",
        "ga.generations",
        "ga.crossover_probability",
        "ga.mutation_probability",
        "ga.gene_mutation_rate",
        "ga.tournament_k",
        "ga.elitism",
        "ga.seed",
        "dqn.episodes",
        "dqn.window",
        "dqn.gamma",
        "dqn.epsilon_start",
        "dqn.epsilon_decay",
        "dqn.epsilon_min",
        "dqn.replay_capacity",
        "dqn.minibatch_size",
        "dqn.eval_every",
        "dqn.train_interval",
        "dqn.learning_rate",
        "dqn.hidden_sizes",
        "dqn.state_augmentation",
        "dqn.seed",
        "random.samples",
    ]
    .iter()
    .map(|k| k.to_string())
    .collect();
    for k in 0..NUM_ACTIONS {
        keys.push(format!("phases[{k}].delta"));
        keys.push(format!("phases[{k}].reward"));
    }
    keys
}

struct Entry {
    line: usize,
    value: String,
}

struct Document<'a> {
    source: &'a str,
    entries: BTreeMap<String, Entry>,
}

impl Document<'_> {
    fn parse_error(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line,
            message,
        }
    }

    fn take<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>> {
        let Some(entry) = self.entries.remove(key) else {
            return Ok(None);
        };
        entry
            .value
            .parse::<T>()
            .map(Some)
            .map_err(|_| self.parse_error(entry.line, format!("{key}: expected {what}, found `{}`", entry.value)))
    }

    fn set<T: FromStr>(&mut self, key: &str, what: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key, what)? {
            *slot = v;
        }
        Ok(())
    }

    fn set_f64(&mut self, key: &str, slot: &mut f64) -> Result<()> {
        self.set(key, "a number", slot)
    }

    fn set_usize(&mut self, key: &str, slot: &mut usize) -> Result<()> {
        self.set(key, "a non-negative integer", slot)
    }

    fn set_bool(&mut self, key: &str, slot: &mut bool) -> Result<()> {
        self.set(key, "true or false", slot)
    }

    fn set_list(&mut self, key: &str, slot: &mut Vec<usize>) -> Result<()> {
        let Some(entry) = self.entries.remove(key) else {
            return Ok(());
        };
        let parsed: std::result::Result<Vec<usize>, _> =
            entry.value.split(',').map(|s| s.trim().parse::<usize>()).collect();
        match parsed {
            Ok(v) if !v.is_empty() && v.iter().all(|&n| n > 0) => {
                *slot = v;
                Ok(())
            }
            _ => Err(self.parse_error(
                entry.line,
                format!("{key}: expected comma-separated positive integers, found `{}`", entry.value),
            )),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn tokenize<'a>(text: &str, source: &'a str) -> Result<Document<'a>> {
    let known = known_keys();
    let mut doc = Document {
        source,
        entries: BTreeMap::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(doc.parse_error(line, format!("expected `key = value`, found `{content}`")));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(doc.parse_error(line, "missing key before `=`".into()));
        }
        if value.is_empty() {
            return Err(doc.parse_error(line, format!("{key}: missing value")));
        }
        if !known.iter().any(|k| k == key) {
            return Err(doc.parse_error(line, format!("unknown key `{key}`")));
        }
        if let Some(prev) = doc.entries.get(key) {
            return Err(doc.parse_error(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        doc.entries.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(doc)
}

fn check(key: &str, ok: bool, value: impl std::fmt::Display, requirement: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{key} = {value} {requirement}")))
    }
}

/// Parses a configuration from text. `source` names the origin in errors.
pub fn parse_config_str(text: &str, source: &str) -> Result<RunConfig> {
    parse_config_str_for(text, source, None)
}

/// Like [`parse_config_str`], but starts from the defaults of `requested`
/// and rejects an `experiment` key naming a different one.
pub fn parse_config_str_for(text: &str, source: &str, requested: Option<Experiment>) -> Result<RunConfig> {
    let mut doc = tokenize(text, source)?;

    let experiment = match (doc.take::<u8>("experiment", "1, 2 or 3")?, requested) {
        (Some(id), requested) => {
            let e = Experiment::from_id(id)
                .map_err(|_| Error::InvalidConfig(format!("experiment = {id} must be 1, 2 or 3")))?;
            if let Some(r) = requested.filter(|&r| r != e) {
                return Err(Error::InvalidConfig(format!(
                    "experiment = {id} in {source} conflicts with requested experiment {r}"
                )));
            }
            e
        }
        (None, requested) => requested.unwrap_or(Experiment::One),
    };
    let mut cfg = RunConfig::for_experiment(experiment);

    let sc = &mut cfg.scenario;
    doc.set_f64("epidemic.alpha", &mut sc.params.alpha)?;
    doc.set_f64("epidemic.beta", &mut sc.params.beta)?;
    doc.set_f64("epidemic.gamma", &mut sc.params.gamma)?;
    let alpha = sc.params.alpha;
    check("epidemic.alpha", alpha > 0.0 && alpha <= 1.0, alpha, "must lie in (0, 1]")?;
    let beta = sc.params.beta;
    check("epidemic.beta", beta > 0.0 && beta.is_finite(), beta, "must be positive")?;
    let gamma = sc.params.gamma;
    check("epidemic.gamma", gamma > 0.0 && gamma <= 1.0, gamma, "must lie in (0, 1]")?;

    let mut population = sc.population;
    let mut e0 = sc.initial.e * sc.population;
    doc.set_f64("population.n", &mut population)?;
    doc.set_f64("population.e0", &mut e0)?;
    check("population.n", population >= 1.0 && population.is_finite(), population, "must be at least 1")?;
    check("population.e0", e0 >= 0.0 && e0 <= population, e0, "must lie in [0, population.n]")?;
    sc.population = population;
    sc.initial = CompartmentState::from_counts(population, e0, 0.0, 0.0)?;

    for k in 0..NUM_ACTIONS {
        doc.set_f64(&format!("phases[{k}].delta"), &mut sc.phases[k].delta)?;
        doc.set_f64(&format!("phases[{k}].reward"), &mut sc.phases[k].daily_reward)?;
    }
    doc.set_f64("beds.start", &mut sc.beds.start)?;
    doc.set_f64("beds.end", &mut sc.beds.end)?;
    doc.set_f64("theta.start", &mut sc.theta.start)?;
    doc.set_f64("theta.end", &mut sc.theta.end)?;
    doc.set_f64("icu.fraction", &mut sc.icu_fraction)?;
    doc.set_f64("penalty.bed", &mut sc.bed_penalty)?;
    doc.set_f64("penalty.pattern", &mut sc.pattern_penalty)?;
    doc.set_bool("pattern.enabled", &mut sc.pattern_enabled)?;
    doc.set_usize("horizon", &mut sc.horizon)?;
    sc.validate()?;

    let ga = &mut cfg.ga;
    doc.set_usize("ga.population_size", &mut ga.population_size)?;
    doc.set_usize("ga.generations", &mut ga.generations)?;
    doc.set_f64("ga.crossover_probability", &mut ga.crossover_probability)?;
    doc.set_f64("ga.mutation_probability", &mut ga.mutation_probability)?;
    doc.set_f64("ga.gene_mutation_rate", &mut ga.gene_mutation_rate)?;
    doc.set_usize("ga.tournament_k", &mut ga.tournament_k)?;
    doc.set_usize("ga.elitism", &mut ga.elitism)?;
    doc.set("ga.seed", "a non-negative integer", &mut ga.seed)?;
    ga.validate()?;

    let dqn = &mut cfg.dqn;
    doc.set_usize("dqn.episodes", &mut dqn.episodes)?;
    doc.set_usize("dqn.window", &mut dqn.window)?;
    doc.set_f64("dqn.gamma", &mut dqn.gamma)?;
    doc.set_f64("dqn.epsilon_start", &mut dqn.epsilon_start)?;
    doc.set_f64("dqn.epsilon_decay", &mut dqn.epsilon_decay)?;
    doc.set_f64("dqn.epsilon_min", &mut dqn.epsilon_min)?;
    doc.set_usize("dqn.replay_capacity", &mut dqn.replay_capacity)?;
    doc.set_usize("dqn.minibatch_size", &mut dqn.minibatch_size)?;
    doc.set_usize("dqn.eval_every", &mut dqn.eval_every)?;
    doc.set_usize("dqn.train_interval", &mut dqn.train_interval)?;
    doc.set_f64("dqn.learning_rate", &mut dqn.learning_rate)?;
    doc.set_list("dqn.hidden_sizes", &mut dqn.hidden_sizes)?;
    doc.set_bool("dqn.state_augmentation", &mut dqn.state_augmentation)?;
    doc.set("dqn.seed", "a non-negative integer", &mut dqn.seed)?;
    dqn.validate()?;

    doc.set_usize("random.samples", &mut cfg.random_samples)?;
    check("random.samples", cfg.random_samples >= 1, cfg.random_samples, "must be at least 1")?;

    debug_assert!(doc.entries.is_empty(), "unapplied keys: {:?}", doc.entries.keys().collect::<Vec<_>>());
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_for(path, None)
}

pub fn parse_config_for(path: &Path, requested: Option<Experiment>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str_for(&text, &path.display().to_string(), requested)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, "test.cfg")
    }

    #[test]
    fn empty_document_is_experiment_one() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.scenario, Experiment::One.scenario());
        assert_eq!(cfg.scenario.population, 126_000_000.0);
        assert_eq!(parse("# only a comment\n\n   \n").unwrap(), cfg);
    }

    #[test]
    fn experiment_three_budget() {
        let cfg = parse("experiment = 3").unwrap();
        assert!(cfg.scenario.pattern_enabled);
        assert_eq!(cfg.ga.generations, 2000);
        assert_eq!(cfg.dqn.episodes, 2000);
    }

    #[test]
    fn requested_experiment() {
        let cfg = parse_config_str_for("horizon = 50", "x", Some(Experiment::Two)).unwrap();
        assert_eq!(cfg.experiment, Experiment::Two);
        assert_eq!(cfg.scenario.theta.end, 0.5);
        assert!(parse_config_str_for("experiment = 2", "x", Some(Experiment::Two)).is_ok());
        let err = parse_config_str_for("experiment = 3", "x", Some(Experiment::Two)).unwrap_err();
        assert!(err.to_string().contains("experiment"));
    }

    #[test]
    fn bed_schedule_end() {
        let cfg = parse("beds.end = 0.5\nhorizon = 200\n").unwrap();
        assert!((cfg.scenario.beds_fraction(200).unwrap() - 0.0005).abs() < 1e-15);
        assert!((cfg.scenario.beds_fraction(1).unwrap() - 0.0015).abs() < 1e-15);
    }

    #[test]
    fn overrides_and_inline_comments() {
        let cfg = parse(
            "epidemic.beta = 0.5  # faster\npopulation.n = 1000\npopulation.e0 = 10\n\
             dqn.hidden_sizes = 8, 8\nga.seed = 9\npattern.enabled = true\nrandom.samples = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario.params.beta, 0.5);
        assert_eq!(cfg.scenario.initial.e, 0.01);
        assert_eq!(cfg.dqn.hidden_sizes, vec![8, 8]);
        assert_eq!(cfg.ga.seed, 9);
        assert!(cfg.scenario.pattern_enabled);
        assert_eq!(cfg.random_samples, 7);
    }

    #[test]
    fn delta_above_one_names_the_key() {
        let err = parse("phases[0].delta = 1.5").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert!(err.to_string().contains("phases[0].delta"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        for (text, line) in [
            ("horizon = 200\nnot a pair\n", 2),
            ("\n\nfoo.bar = 1\n", 3),
            ("horizon = 10\nhorizon = 20\n", 2),
            ("# c\nhorizon = ten\n", 2),
            ("pattern.enabled = yes", 1),
            ("dqn.hidden_sizes = 8,,8", 1),
            ("= 3", 1),
            ("horizon =", 1),
        ] {
            match parse(text) {
                Err(Error::Parse { line: got, path, .. }) => {
                    assert_eq!(got, line, "{text:?}");
                    assert_eq!(path, "test.cfg");
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn validation_errors_name_keys() {
        for (text, key) in [
            ("epidemic.alpha = 0", "epidemic.alpha"),
            ("epidemic.gamma = 2", "epidemic.gamma"),
            ("population.e0 = -1", "population.e0"),
            ("theta.end = 0", "theta.end"),
            ("penalty.bed = 5", "penalty.bed"),
            ("ga.crossover_probability = 1.5", "ga.crossover_probability"),
            ("dqn.gamma = 1", "dqn.gamma"),
            ("random.samples = 0", "random.samples"),
            ("experiment = 4", "experiment"),
        ] {
            let err = parse(text).unwrap_err();
            assert!(err.to_string().contains(key), "{text}: {err}");
        }
    }

    #[test]
    fn every_known_key_is_applied() {
        let values = |k: &str| match k {
            "experiment" => "2".to_string(),
            "pattern.enabled" | "dqn.state_augmentation" => "false".into(),
            "dqn.hidden_sizes" => "4".into(),
            "population.n" => "1000".into(),
            "population.e0" => "1".into(),
            "horizon" | "ga.generations" | "dqn.episodes" | "random.samples" => "5".into(),
            "ga.population_size" => "10".into(),
            "ga.tournament_k" | "ga.elitism" | "ga.seed" | "dqn.seed" => "1".into(),
            "dqn.window" | "dqn.minibatch_size" | "dqn.eval_every" | "dqn.train_interval" => "2".into(),
            "dqn.replay_capacity" => "100".into(),
            "penalty.bed" | "penalty.pattern" => "-1".into(),
            k if k.ends_with(".delta") => format!("0.{}", 2 + k.as_bytes()[7] - b'0'),
            k if k.ends_with(".reward") => format!("{}", 1 + k.as_bytes()[7] - b'0'),
            _ => "0.5".into(),
        };
        let text: String = known_keys().iter().map(|k| format!("{k} = {}\n", values(k))).collect();
        parse(&text).unwrap();
    }
}
