//! Government phases, rewards, capacity schedules and the phase-ordering
//! constraint, plus the evaluator that scores an action sequence.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seir::{seir_step, CompartmentState, EpidemicParams};

/// Number of confinement levels an action can pick from.
pub const NUM_ACTIONS: usize = 4;

/// A confinement level: how much it shrinks contacts and what the economy
/// still produces per day under it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// Contact-rate weight in (0, 1].
    pub delta: f64,
    /// Output in billions per day.
    pub daily_reward: f64,
}

/// Total isolation, partial isolation, soft restrictions, no restrictions.
/// Rewards are the share of a 10-billion daily economy left standing.
pub const CANONICAL_PHASES: [Phase; NUM_ACTIONS] = [
    Phase { delta: 0.25, daily_reward: 4.0 },
    Phase { delta: 0.50, daily_reward: 6.0 },
    Phase { delta: 0.75, daily_reward: 8.0 },
    Phase { delta: 1.00, daily_reward: 10.0 },
];

/// Linear ramp from `start` on day 1 to `end` on the last day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
}

impl Schedule {
    pub const fn constant(value: f64) -> Self {
        Schedule { start: value, end: value }
    }

    pub const fn linear(start: f64, end: f64) -> Self {
        Schedule { start, end }
    }

    /// Value on 1-based `day` of a `horizon`-day run.
    pub fn value(&self, day: usize, horizon: usize) -> f64 {
        if horizon <= 1 {
            return self.start;
        }
        self.start + (self.end - self.start) * (day - 1) as f64 / (horizon - 1) as f64
    }
}

/// The three canonical experiment setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    /// Constant bed capacity, no seasonal effect.
    One,
    /// Shrinking bed capacity and a warming season that lowers contacts.
    Two,
    /// Shrinking bed capacity plus the phase-ordering constraint.
    Three,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::One, Experiment::Two, Experiment::Three];

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Experiment::One),
            2 => Ok(Experiment::Two),
            3 => Ok(Experiment::Three),
            other => Err(Error::OutOfRange(format!("experiment id {other}"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Experiment::One => 1,
            Experiment::Two => 2,
            Experiment::Three => 3,
        }
    }

    pub fn scenario(self) -> Scenario {
        let base = Scenario::default();
        match self {
            Experiment::One => base,
            Experiment::Two => Scenario {
                beds: Schedule::linear(1.5, 0.5),
                theta: Schedule::linear(1.0, 0.5),
                ..base
            },
            Experiment::Three => Scenario {
                beds: Schedule::linear(1.5, 0.5),
                pattern_enabled: true,
                ..base
            },
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Everything needed to score an action sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Number of days to plan.
    pub horizon: usize,
    pub params: EpidemicParams,
    /// Head count, used only for reporting absolute numbers.
    pub population: f64,
    pub initial: CompartmentState,
    pub phases: [Phase; NUM_ACTIONS],
    /// Seasonal contact multiplier.
    pub theta: Schedule,
    /// ICU beds per 1000 inhabitants.
    pub beds: Schedule,
    /// Share of infectious people that need an ICU bed.
    pub icu_fraction: f64,
    /// Reward for a day on which ICU demand exceeds capacity.
    pub bed_penalty: f64,
    pub pattern_enabled: bool,
    /// Reward for every day from the first ordering violation on.
    pub pattern_penalty: f64,
}

impl Default for Scenario {
    /// The baseline setup: 126M people, 1000 exposed, 200 days, 1.5 beds per
    /// 1000 and no seasonal effect.
    fn default() -> Self {
        let population = 126_000_000.0;
        Scenario {
            horizon: 200,
            params: EpidemicParams::covid19(),
            population,
            initial: CompartmentState::from_counts(population, 1000.0, 0.0, 0.0)
                .expect("canonical initial state"),
            phases: CANONICAL_PHASES,
            theta: Schedule::constant(1.0),
            beds: Schedule::constant(1.5),
            icu_fraction: 0.05,
            bed_penalty: -1000.0,
            pattern_enabled: false,
            pattern_penalty: -10.0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        self.params.validate()?;
        self.initial.validate()?;
        if !(self.population > 0.0 && self.population.is_finite()) {
            return bad(format!("population {} must be positive", self.population));
        }
        for (k, phase) in self.phases.iter().enumerate() {
            if !(phase.delta > 0.0 && phase.delta <= 1.0) {
                return bad(format!("phases[{k}].delta = {} must lie in (0, 1]", phase.delta));
            }
            if !phase.daily_reward.is_finite() {
                return bad(format!("phases[{k}].reward must be finite"));
            }
        }
        for (k, pair) in self.phases.windows(2).enumerate() {
            if pair[1].delta <= pair[0].delta {
                return bad(format!("phases[{}].delta must exceed phases[{k}].delta", k + 1));
            }
            if pair[1].daily_reward <= pair[0].daily_reward {
                return bad(format!("phases[{}].reward must exceed phases[{k}].reward", k + 1));
            }
        }
        for (name, v) in [("theta.start", self.theta.start), ("theta.end", self.theta.end)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} must lie in (0, 1]"));
            }
        }
        for (name, v) in [("beds.start", self.beds.start), ("beds.end", self.beds.end)] {
            if !(0.0..=1000.0).contains(&v) {
                return bad(format!("{name} = {v} must lie in [0, 1000]"));
            }
        }
        if !(self.icu_fraction > 0.0 && self.icu_fraction <= 1.0) {
            return bad(format!("icu fraction {} must lie in (0, 1]", self.icu_fraction));
        }
        if !(self.bed_penalty < 0.0) {
            return bad(format!("penalty.bed = {} must be negative", self.bed_penalty));
        }
        if !(self.pattern_penalty < 0.0) {
            return bad(format!("penalty.pattern = {} must be negative", self.pattern_penalty));
        }
        Ok(())
    }

    fn check_day(&self, day: usize) -> Result<()> {
        if day == 0 || day > self.horizon {
            return Err(Error::OutOfRange(format!("day {day} (horizon {})", self.horizon)));
        }
        Ok(())
    }

    fn phase(&self, phase_index: u8) -> Result<&Phase> {
        self.phases
            .get(phase_index as usize)
            .ok_or_else(|| Error::OutOfRange(format!("phase {phase_index}")))
    }

    /// Contact multiplier `delta(phase) * theta(day)`.
    pub fn contact_scale_for_day(&self, phase_index: u8, day: usize) -> Result<f64> {
        self.check_day(day)?;
        let phase = self.phase(phase_index)?;
        Ok(phase.delta * self.theta.value(day, self.horizon))
    }

    /// Bed capacity on `day` as a fraction of the population.
    pub fn beds_fraction(&self, day: usize) -> Result<f64> {
        self.check_day(day)?;
        Ok(self.beds.value(day, self.horizon) / 1000.0)
    }

    /// ICU demand as a fraction of the population.
    pub fn icu_demand(&self, state: &CompartmentState) -> f64 {
        self.icu_fraction * state.i
    }

    /// Reward for a day, given the state after that day's action. An
    /// ordering violation overrides the bed penalty.
    pub fn daily_reward(
        &self,
        phase_index: u8,
        state_after: &CompartmentState,
        day: usize,
        pattern_after: PatternState,
    ) -> Result<f64> {
        let phase = self.phase(phase_index)?;
        let beds = self.beds_fraction(day)?;
        if self.pattern_enabled && pattern_after.is_rejected() {
            Ok(self.pattern_penalty)
        } else if self.icu_demand(state_after) > beds {
            Ok(self.bed_penalty)
        } else {
            Ok(phase.daily_reward)
        }
    }

    /// Scores a full action sequence.
    pub fn evaluate(&self, actions: &ActionSequence) -> Result<EvaluationResult> {
        evaluate_sequence(self, actions)
    }
}

/// States of the automaton accepting `0*1*2*3*0*` over phase indices.
///
/// `P0`..`P3` mean the last run was of that phase within the rising part,
/// `P4` means the trailing run of zeros has started. `Rejected` absorbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum PatternState {
    #[default]
    P0,
    P1,
    P2,
    P3,
    P4,
    Rejected,
}

impl PatternState {
    pub const ALL: [PatternState; 6] = [
        PatternState::P0,
        PatternState::P1,
        PatternState::P2,
        PatternState::P3,
        PatternState::P4,
        PatternState::Rejected,
    ];

    pub fn step(self, symbol: u8) -> PatternState {
        use PatternState::*;
        match (self, symbol) {
            (Rejected, _) => Rejected,
            (P0, 0) => P0,
            (P4 | P1 | P2 | P3, 0) => P4,
            (P0 | P1, 1) => P1,
            (P0 | P1 | P2, 2) => P2,
            (P0 | P1 | P2 | P3, 3) => P3,
            _ => Rejected,
        }
    }

    pub fn is_rejected(self) -> bool {
        self == PatternState::Rejected
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            PatternState::P0 => "P0",
            PatternState::P1 => "P1",
            PatternState::P2 => "P2",
            PatternState::P3 => "P3",
            PatternState::P4 => "P4",
            PatternState::Rejected => "REJ",
        }
    }
}

/// Runs the automaton over a whole string of phase indices.
pub fn dfa_run(symbols: &[u8]) -> PatternState {
    symbols.iter().fold(PatternState::P0, |st, &a| st.step(a))
}

impl fmt::Display for PatternState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One phase index per day.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSequence(Vec<u8>);

impl ActionSequence {
    pub fn new(actions: Vec<u8>) -> Result<Self> {
        if let Some((day, a)) = actions.iter().enumerate().find(|(_, &a)| a as usize >= NUM_ACTIONS) {
            return Err(Error::OutOfRange(format!("action {a} on day {}", day + 1)));
        }
        Ok(ActionSequence(actions))
    }

    pub fn constant(action: u8, len: usize) -> Result<Self> {
        Self::new(vec![action; len])
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }

    /// Number of days whose phase differs from the previous day's.
    pub fn phase_changes(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Share of days spent in each phase.
    pub fn phase_shares(&self) -> [f64; NUM_ACTIONS] {
        let mut shares = [0.0; NUM_ACTIONS];
        for &a in &self.0 {
            shares[a as usize] += 1.0;
        }
        if !self.0.is_empty() {
            shares.iter_mut().for_each(|s| *s /= self.0.len() as f64);
        }
        shares
    }
}

impl fmt::Display for ActionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.0 {
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Outcome of a single simulated day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayOutcome {
    pub day: usize,
    pub action: u8,
    pub state: CompartmentState,
    pub pattern: PatternState,
    pub reward: f64,
    pub over_capacity: bool,
}

/// Day-by-day environment used by the evaluator and by the learning agent.
#[derive(Debug, Clone)]
pub struct Rollout<'a> {
    scenario: &'a Scenario,
    day: usize,
    state: CompartmentState,
    pattern: PatternState,
}

impl<'a> Rollout<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Rollout {
            scenario,
            day: 0,
            state: scenario.initial,
            pattern: PatternState::P0,
        }
    }

    /// Days simulated so far.
    pub fn day(&self) -> usize {
        self.day
    }

    pub fn state(&self) -> &CompartmentState {
        &self.state
    }

    pub fn pattern(&self) -> PatternState {
        self.pattern
    }

    pub fn is_done(&self) -> bool {
        self.day >= self.scenario.horizon
    }

    pub fn step(&mut self, action: u8) -> Result<DayOutcome> {
        let day = self.day + 1;
        let sc = self.scenario;
        let scale = sc.contact_scale_for_day(action, day)?;
        let state = seir_step(&self.state, &sc.params, scale).map_err(|e| Error::at_day(day, e))?;
        let pattern = if sc.pattern_enabled {
            self.pattern.step(action)
        } else {
            self.pattern
        };
        let reward = sc.daily_reward(action, &state, day, pattern)?;
        let over_capacity = sc.icu_demand(&state) > sc.beds_fraction(day)?;
        self.day = day;
        self.state = state;
        self.pattern = pattern;
        Ok(DayOutcome {
            day,
            action,
            state,
            pattern,
            reward,
            over_capacity,
        })
    }
}

/// Full record of one evaluated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub actions: ActionSequence,
    pub total_reward: f64,
    pub daily_rewards: Vec<f64>,
    /// `horizon + 1` states; entry 0 is the initial state.
    pub trajectory: Vec<CompartmentState>,
    /// Automaton state after each day (stays `P0` when the constraint is off).
    pub pattern_states: Vec<PatternState>,
    /// 1-based days on which ICU demand exceeded capacity.
    pub violation_days: Vec<usize>,
    /// First 1-based day that broke the phase ordering.
    pub pattern_break_day: Option<usize>,
}

impl EvaluationResult {
    pub fn horizon(&self) -> usize {
        self.daily_rewards.len()
    }
}

/// Simulates `actions` under `scenario` and accumulates the daily rewards.
pub fn evaluate_sequence(scenario: &Scenario, actions: &ActionSequence) -> Result<EvaluationResult> {
    if actions.len() != scenario.horizon {
        return Err(Error::ShapeMismatch(format!(
            "sequence has {} actions, horizon is {}",
            actions.len(),
            scenario.horizon
        )));
    }
    let n = scenario.horizon;
    let mut rollout = Rollout::new(scenario);
    let mut trajectory = Vec::with_capacity(n + 1);
    trajectory.push(scenario.initial);
    let mut daily_rewards = Vec::with_capacity(n);
    let mut pattern_states = Vec::with_capacity(n);
    let mut violation_days = Vec::new();
    let mut pattern_break_day = None;
    let mut total_reward = 0.0;

    for &action in actions.as_slice() {
        let out = rollout.step(action)?;
        trajectory.push(out.state);
        pattern_states.push(out.pattern);
        daily_rewards.push(out.reward);
        total_reward += out.reward;
        if out.over_capacity {
            violation_days.push(out.day);
        }
        if out.pattern.is_rejected() && pattern_break_day.is_none() {
            pattern_break_day = Some(out.day);
        }
    }

    Ok(EvaluationResult {
        actions: actions.clone(),
        total_reward,
        daily_rewards,
        trajectory,
        pattern_states,
        violation_days,
        pattern_break_day,
    })
}

/// Total reward only, without keeping the trajectory.
pub fn total_reward(scenario: &Scenario, actions: &ActionSequence) -> Result<f64> {
    if actions.len() != scenario.horizon {
        return Err(Error::ShapeMismatch(format!(
            "sequence has {} actions, horizon is {}",
            actions.len(),
            scenario.horizon
        )));
    }
    let mut rollout = Rollout::new(scenario);
    let mut total = 0.0;
    for &action in actions.as_slice() {
        total += rollout.step(action)?.reward;
    }
    Ok(total)
}
