//! Deep Q-learning over the day-by-day scenario environment.
//!
//! The agent observes the infectious share of the population over a trailing
//! window of days, picks a phase epsilon-greedily, stores the transition in a
//! FIFO replay buffer and regresses the network on Bellman targets for a
//! random minibatch. There is no target network. Periodic greedy rollouts
//! (no exploration, no learning, no buffer writes) track progress, and the
//! best of them is reported.

use std::collections::VecDeque;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{mse_loss_batch, Adam, Network, NetworkSpec};
use crate::scenario::{evaluate_sequence, ActionSequence, EvaluationResult, PatternState, Rollout, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub episodes: usize,
    /// Days of infectious history in an observation.
    pub window: usize,
    /// Discount factor.
    pub gamma: f64,
    pub epsilon_start: f64,
    /// Multiplicative epsilon decay per episode.
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub replay_capacity: usize,
    pub minibatch_size: usize,
    /// Greedy evaluation period, in episodes.
    pub eval_every: usize,
    /// Days between training steps (1 = every day).
    pub train_interval: usize,
    pub learning_rate: f64,
    pub hidden_sizes: Vec<usize>,
    /// Appends the normalized day and a one-hot automaton state to the
    /// observation.
    pub state_augmentation: bool,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            episodes: 1000,
            window: 25,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_decay: 0.99,
            epsilon_min: 0.02,
            replay_capacity: 10_000,
            minibatch_size: 32,
            eval_every: 10,
            train_interval: 1,
            learning_rate: 0.001,
            hidden_sizes: vec![64, 128, 128],
            state_augmentation: false,
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("dqn.gamma = {} must lie in (0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_min) {
            return bad("dqn.epsilon_start and dqn.epsilon_min must lie in [0, 1]".into());
        }
        if self.epsilon_min > self.epsilon_start {
            return bad("dqn.epsilon_min must not exceed dqn.epsilon_start".into());
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad(format!("dqn.epsilon_decay = {} must lie in (0, 1]", self.epsilon_decay));
        }
        if self.window == 0 || self.minibatch_size == 0 || self.eval_every == 0 || self.train_interval == 0 {
            return bad("dqn.window, minibatch_size, eval_every and train_interval must be positive".into());
        }
        if self.replay_capacity < self.minibatch_size {
            return bad("dqn.replay_capacity must be at least the minibatch size".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("dqn.learning_rate must be positive".into());
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        if self.state_augmentation {
            self.window + 1 + PatternState::ALL.len()
        } else {
            self.window
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_size: self.input_size(),
            hidden_sizes: self.hidden_sizes.clone(),
            ..NetworkSpec::default()
        }
    }

    /// Exploration rate used during episode `k` (0-based), i.e. after `k`
    /// completed episodes.
    pub fn epsilon_at(&self, k: usize) -> f64 {
        let decayed = self.epsilon_start * self.epsilon_decay.powi(k.min(i32::MAX as usize) as i32);
        decayed.max(self.epsilon_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: u8,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Draws `size` distinct transitions uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if size == 0 || size > self.items.len() {
            return Err(Error::OutOfRange(format!("minibatch of {size} from {} transitions", self.items.len())));
        }
        Ok(index::sample(rng, self.items.len(), size)
            .into_iter()
            .map(|k| &self.items[k])
            .collect())
    }
}

/// The last `window` daily infectious percentages, oldest first, left-padded
/// with zeros. `history[d - 1]` is the infectious fraction after day `d`;
/// only days `1..=day` are used.
pub fn encode_state(history: &[f64], day: usize, window: usize) -> Vec<f64> {
    let upto = day.min(history.len());
    let from = upto.saturating_sub(window);
    let mut obs = vec![0.0; window - (upto - from)];
    obs.extend(history[from..upto].iter().map(|i| i * 100.0));
    obs
}

fn observe(config: &DqnConfig, history: &[f64], day: usize, horizon: usize, pattern: PatternState) -> Vec<f64> {
    let mut obs = encode_state(history, day, config.window);
    if config.state_augmentation {
        obs.push(day as f64 / horizon as f64);
        obs.extend(PatternState::ALL.iter().map(|&p| if p == pattern { 1.0 } else { 0.0 }));
    }
    obs
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Epsilon-greedy choice. With `epsilon == 0` no randomness is consumed.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> u8 {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len()) as u8
    } else {
        argmax(q_values) as u8
    }
}

/// Regression targets for a minibatch: the network's current Q-values with
/// the taken action's entry replaced by `r` (terminal) or
/// `r + gamma * max_a Q(s', a)`. Also returns the stacked states.
pub fn bellman_targets(network: &Network, batch: &[&Transition], gamma: f64) -> Result<(Array2<f64>, Array2<f64>)> {
    let (states, next_states) = stack_batch(network, batch)?;
    let current = network.forward_batch(states.view())?;
    let next_q = network.forward_batch(next_states.view())?;
    let targets = replace_taken(current, &next_q, batch, gamma)?;
    Ok((states, targets))
}

fn stack_batch(network: &Network, batch: &[&Transition]) -> Result<(Array2<f64>, Array2<f64>)> {
    let width = network.spec().input_size;
    let states = stack(batch.iter().map(|t| &t.state), batch.len(), width)?;
    let next_states = stack(batch.iter().map(|t| &t.next_state), batch.len(), width)?;
    Ok((states, next_states))
}

fn replace_taken(mut q: Array2<f64>, next_q: &Array2<f64>, batch: &[&Transition], gamma: f64) -> Result<Array2<f64>> {
    for (b, t) in batch.iter().enumerate() {
        let a = t.action as usize;
        if a >= q.ncols() {
            return Err(Error::OutOfRange(format!("action {a}")));
        }
        q[[b, a]] = if t.terminal {
            t.reward
        } else {
            let best_next = next_q.row(b).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            t.reward + gamma * best_next
        };
    }
    Ok(q)
}

fn stack<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, n: usize, width: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(n * width);
    for row in rows {
        if row.len() != width {
            return Err(Error::ShapeMismatch(format!("observation of {} values, network expects {width}", row.len())));
        }
        flat.extend_from_slice(row);
    }
    Array2::from_shape_vec((n, width), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// One Adam step on the minibatch; returns the loss before the step.
pub fn train_step(network: &mut Network, adam: &mut Adam, batch: &[&Transition], gamma: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("minibatch".into()));
    }
    let (states, next_states) = stack_batch(network, batch)?;
    let cache = network.forward_cached(states.view())?;
    let next_q = network.forward_batch(next_states.view())?;
    let targets = replace_taken(cache.output().clone(), &next_q, batch, gamma)?;
    let (loss, upstream) = mse_loss_batch(cache.output(), &targets)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss ({loss})")));
    }
    let grads = network.backward(&cache, &upstream)?;
    adam.update(network, &grads)?;
    Ok(loss)
}

/// Network, optimizer, replay memory and RNG of one learning run.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub network: Network,
    pub adam: Adam,
    pub buffer: ReplayBuffer,
    rng: rand_chacha::ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub actions: ActionSequence,
    pub total_reward: f64,
    /// Mean training loss over the episode, if any step trained.
    pub mean_loss: Option<f64>,
}

impl DqnAgent {
    pub fn new(config: DqnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::seeded_rng(config.seed);
        let network = Network::new(config.network_spec(), &mut rng)?;
        let adam = Adam::new(&network, config.learning_rate);
        let buffer = ReplayBuffer::new(config.replay_capacity);
        Ok(DqnAgent {
            config,
            network,
            adam,
            buffer,
            rng,
        })
    }

    /// One exploratory, learning episode over the full horizon.
    pub fn run_episode(&mut self, scenario: &Scenario, epsilon: f64) -> Result<EpisodeOutcome> {
        let n = scenario.horizon;
        let mut rollout = Rollout::new(scenario);
        let mut history = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut total = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut obs = observe(&self.config, &history, 0, n, rollout.pattern());

        for day in 1..=n {
            let q = self.network.forward(&obs)?;
            let action = select_action(&q, epsilon, &mut self.rng);
            let out = rollout.step(action)?;
            history.push(out.state.i);
            let next_obs = observe(&self.config, &history, day, n, out.pattern);
            self.buffer.push(Transition {
                state: obs,
                action,
                reward: out.reward,
                next_state: next_obs.clone(),
                terminal: day == n,
            });
            actions.push(action);
            total += out.reward;

            if self.buffer.len() >= self.config.minibatch_size && day % self.config.train_interval == 0 {
                let batch = self.buffer.sample(self.config.minibatch_size, &mut self.rng)?;
                loss_sum += train_step(&mut self.network, &mut self.adam, &batch, self.config.gamma)?;
                loss_count += 1;
            }
            obs = next_obs;
        }
        Ok(EpisodeOutcome {
            actions: ActionSequence::new(actions)?,
            total_reward: total,
            mean_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
        })
    }

    /// Greedy policy rollout; touches neither the network, the buffer nor
    /// the RNG.
    pub fn greedy_rollout(&self, scenario: &Scenario) -> Result<EvaluationResult> {
        greedy_rollout(&self.config, &self.network, scenario)
    }
}

/// Rolls out the greedy policy of `network` and evaluates the sequence.
pub fn greedy_rollout(config: &DqnConfig, network: &Network, scenario: &Scenario) -> Result<EvaluationResult> {
    let n = scenario.horizon;
    let mut rollout = Rollout::new(scenario);
    let mut history = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    let mut obs = observe(config, &history, 0, n, rollout.pattern());
    for day in 1..=n {
        let q = network.forward(&obs)?;
        let action = argmax(&q) as u8;
        let out = rollout.step(action)?;
        history.push(out.state.i);
        actions.push(action);
        obs = observe(config, &history, day, n, out.pattern);
    }
    evaluate_sequence(scenario, &ActionSequence::new(actions)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyEval {
    /// Episodes completed before the evaluation.
    pub episode: usize,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub eval_curve: Vec<GreedyEval>,
    /// Reward of every exploratory episode.
    pub episode_rewards: Vec<f64>,
    pub best_episode: usize,
    pub best: EvaluationResult,
    pub final_epsilon: f64,
    pub wall_time_secs: f64,
}

impl TrainingReport {
    pub fn best_reward(&self) -> f64 {
        self.best.total_reward
    }
}

/// Full training run. Returns the best greedy evaluation seen, and the
/// trained agent.
pub fn train_agent(config: &DqnConfig, scenario: &Scenario) -> Result<(TrainingReport, DqnAgent)> {
    scenario.validate()?;
    let started = Instant::now();
    let mut agent = DqnAgent::new(config.clone())?;

    let first = agent.greedy_rollout(scenario)?;
    let mut eval_curve = vec![GreedyEval {
        episode: 0,
        total_reward: first.total_reward,
    }];
    let mut best = first;
    let mut best_episode = 0;
    let mut episode_rewards = Vec::with_capacity(config.episodes);

    for k in 0..config.episodes {
        let epsilon = config.epsilon_at(k);
        let outcome = agent.run_episode(scenario, epsilon).map_err(|e| match e {
            Error::NonFinite(what) => Error::Diverged {
                episode: k + 1,
                message: format!("non-finite {what}"),
            },
            other => other,
        })?;
        episode_rewards.push(outcome.total_reward);

        let done = k + 1;
        if done % config.eval_every == 0 {
            let eval = agent.greedy_rollout(scenario)?;
            eval_curve.push(GreedyEval {
                episode: done,
                total_reward: eval.total_reward,
            });
            if eval.total_reward > best.total_reward {
                best = eval;
                best_episode = done;
            }
        }
    }

    let report = TrainingReport {
        eval_curve,
        episode_rewards,
        best_episode,
        best,
        final_epsilon: config.epsilon_at(config.episodes),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((report, agent))
}

pub fn train(config: &DqnConfig, scenario: &Scenario) -> Result<TrainingReport> {
    train_agent(config, scenario).map(|(report, _)| report)
}
