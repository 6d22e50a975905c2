//! Generational genetic algorithm over action sequences.
//!
//! Each individual is one phase index per day. A generation keeps the elite
//! unchanged and refills the rest through tournament selection, uniform
//! crossover and random-resetting mutation. All randomness comes from one
//! seeded stream consumed on the calling thread; fitness scoring may run in
//! parallel because evaluation is pure.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{self, ActionSequence, EvaluationResult, Scenario, NUM_ACTIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Chance that a selected pair is recombined at all.
    pub crossover_probability: f64,
    /// Chance that an offspring is mutated at all.
    pub mutation_probability: f64,
    /// Per-gene resampling chance once an offspring is mutated.
    pub gene_mutation_rate: f64,
    pub tournament_k: usize,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 100,
            generations: 1000,
            crossover_probability: 0.6,
            mutation_probability: 0.6,
            gene_mutation_rate: 0.10,
            tournament_k: 3,
            elitism: 1,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("crossover_probability", self.crossover_probability),
            ("mutation_probability", self.mutation_probability),
            ("gene_mutation_rate", self.gene_mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("ga.{name} = {p} must lie in [0, 1]")));
            }
        }
        if self.population_size < 2 {
            return Err(Error::InvalidConfig("ga.population_size must be at least 2".into()));
        }
        if self.tournament_k == 0 || self.tournament_k > self.population_size {
            return Err(Error::InvalidConfig(format!(
                "ga.tournament_k = {} must lie in 1..={}",
                self.tournament_k, self.population_size
            )));
        }
        if self.elitism >= self.population_size {
            return Err(Error::InvalidConfig("ga.elitism must be smaller than the population".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaRunStats {
    /// Entry 0 is the initial population, entry `g` the population after
    /// generation `g`.
    pub best_fitness_per_generation: Vec<f64>,
    pub best: EvaluationResult,
    pub wall_time_secs: f64,
}

impl GaRunStats {
    pub fn best_fitness(&self) -> f64 {
        self.best.total_reward
    }
}

fn random_gene<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    rng.random_range(0..NUM_ACTIONS as u8)
}

/// `population_size` uniformly random sequences of length `horizon`.
pub fn init_population<R: Rng + ?Sized>(population_size: usize, horizon: usize, rng: &mut R) -> Vec<ActionSequence> {
    (0..population_size)
        .map(|_| {
            let genes = (0..horizon).map(|_| random_gene(rng)).collect();
            ActionSequence::new(genes).expect("genes drawn in range")
        })
        .collect()
}

/// Samples `k` distinct individuals and returns the index of the fittest;
/// ties go to the lowest index.
pub fn tournament_select<R: Rng + ?Sized>(fitnesses: &[f64], k: usize, rng: &mut R) -> Result<usize> {
    if fitnesses.is_empty() {
        return Err(Error::Empty("population".into()));
    }
    if k == 0 || k > fitnesses.len() {
        return Err(Error::OutOfRange(format!("tournament size {k} for population {}", fitnesses.len())));
    }
    let winner = index::sample(rng, fitnesses.len(), k)
        .into_iter()
        .reduce(|best, cand| {
            let (fb, fc) = (fitnesses[best], fitnesses[cand]);
            if fc > fb || (fc == fb && cand < best) {
                cand
            } else {
                best
            }
        })
        .expect("k >= 1");
    Ok(winner)
}

/// With probability `probability`, swaps each position between the two
/// children with chance one half; otherwise the children copy the parents.
pub fn uniform_crossover<R: Rng + ?Sized>(
    parent_a: &ActionSequence,
    parent_b: &ActionSequence,
    probability: f64,
    rng: &mut R,
) -> Result<(ActionSequence, ActionSequence)> {
    if parent_a.len() != parent_b.len() {
        return Err(Error::ShapeMismatch(format!(
            "parents of length {} and {}",
            parent_a.len(),
            parent_b.len()
        )));
    }
    let mut a = parent_a.as_slice().to_vec();
    let mut b = parent_b.as_slice().to_vec();
    if rng.random_bool(probability) {
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            if rng.random_bool(0.5) {
                std::mem::swap(x, y);
            }
        }
    }
    Ok((ActionSequence::new(a)?, ActionSequence::new(b)?))
}

/// With probability `mutation_probability`, redraws each gene uniformly
/// (possibly to the same value) with chance `gene_rate`.
pub fn mutate<R: Rng + ?Sized>(
    individual: &ActionSequence,
    mutation_probability: f64,
    gene_rate: f64,
    rng: &mut R,
) -> ActionSequence {
    let mut genes = individual.as_slice().to_vec();
    if rng.random_bool(mutation_probability) {
        for g in genes.iter_mut() {
            if rng.random_bool(gene_rate) {
                *g = random_gene(rng);
            }
        }
    }
    ActionSequence::new(genes).expect("genes drawn in range")
}

fn score(scenario: &Scenario, population: &[ActionSequence]) -> Result<Vec<f64>> {
    population
        .par_iter()
        .map(|ind| scenario::total_reward(scenario, ind))
        .collect()
}

/// Indices sorted by fitness, best first; equal fitness keeps index order.
fn ranking(fitnesses: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitnesses.len()).collect();
    order.sort_by(|&a, &b| fitnesses[b].total_cmp(&fitnesses[a]).then(a.cmp(&b)));
    order
}

/// Runs the full generational loop and returns the best individual found.
pub fn run_ga(config: &GaConfig, scenario: &Scenario) -> Result<GaRunStats> {
    config.validate()?;
    scenario.validate()?;
    let started = Instant::now();
    let mut rng = crate::seeded_rng(config.seed);

    let mut population = init_population(config.population_size, scenario.horizon, &mut rng);
    let mut fitnesses = score(scenario, &population)?;
    let mut curve = Vec::with_capacity(config.generations + 1);
    curve.push(fitnesses[ranking(&fitnesses)[0]]);

    for _ in 0..config.generations {
        let order = ranking(&fitnesses);
        let mut next: Vec<ActionSequence> = Vec::with_capacity(config.population_size);
        let mut next_fit: Vec<Option<f64>> = Vec::with_capacity(config.population_size);
        for &idx in order.iter().take(config.elitism) {
            next.push(population[idx].clone());
            next_fit.push(Some(fitnesses[idx]));
        }
        while next.len() < config.population_size {
            let pa = tournament_select(&fitnesses, config.tournament_k, &mut rng)?;
            let pb = tournament_select(&fitnesses, config.tournament_k, &mut rng)?;
            let (ca, cb) = uniform_crossover(&population[pa], &population[pb], config.crossover_probability, &mut rng)?;
            for child in [ca, cb] {
                if next.len() < config.population_size {
                    next.push(mutate(&child, config.mutation_probability, config.gene_mutation_rate, &mut rng));
                    next_fit.push(None);
                }
            }
        }
        let fresh: Vec<usize> = (0..next.len()).filter(|&k| next_fit[k].is_none()).collect();
        let fresh_scores: Vec<f64> = fresh
            .par_iter()
            .map(|&k| scenario::total_reward(scenario, &next[k]))
            .collect::<Result<_>>()?;
        for (k, s) in fresh.into_iter().zip(fresh_scores) {
            next_fit[k] = Some(s);
        }
        population = next;
        fitnesses = next_fit.into_iter().map(|f| f.expect("scored")).collect();
        curve.push(fitnesses[ranking(&fitnesses)[0]]);
    }

    let best_idx = ranking(&fitnesses)[0];
    let best = scenario::evaluate_sequence(scenario, &population[best_idx])?;
    Ok(GaRunStats {
        best_fitness_per_generation: curve,
        best,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
