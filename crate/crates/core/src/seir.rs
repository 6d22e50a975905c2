//! Discrete-time SEIR compartment updates.
//!
//! Compartments are fractions of a constant population, so the transmission
//! term is `beta * s * i` with no `1/N` factor. One call to [`seir_step`]
//! advances exactly one day.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for conservation of `s + e + i + r`.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Negative (or above-one) drift smaller than this is treated as rounding
/// noise and clamped; anything larger is a [`Error::NumericalBlowup`].
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// Per-day SEIR rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Inverse of the mean incubation period (1/day).
    pub alpha: f64,
    /// Contact rate (1/day).
    pub beta: f64,
    /// Inverse of the mean infectious period (1/day).
    pub gamma: f64,
}

impl EpidemicParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let params = EpidemicParams { alpha, beta, gamma };
        params.validate()?;
        Ok(params)
    }

    /// COVID-19 coefficients: 5.2-day incubation, 5.8-day infectious period
    /// and a contact rate giving R0 = 2.6.
    pub fn covid19() -> Self {
        EpidemicParams {
            alpha: 0.1923,
            beta: 0.4482,
            gamma: 0.1724,
        }
    }

    /// Basic reproduction number `beta / gamma`.
    pub fn basic_reproduction_number(&self) -> f64 {
        self.beta / self.gamma
    }

    pub fn validate(&self) -> Result<()> {
        let Self { alpha, beta, gamma } = *self;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParams(format!("alpha = {alpha} must lie in (0, 1]")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParams(format!("gamma = {gamma} must lie in (0, 1]")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta = {beta} must be positive")));
        }
        Ok(())
    }
}

impl Default for EpidemicParams {
    fn default() -> Self {
        Self::covid19()
    }
}

/// Population fractions for one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
}

impl CompartmentState {
    pub fn new(s: f64, e: f64, i: f64, r: f64) -> Result<Self> {
        let state = CompartmentState { s, e, i, r };
        state.validate()?;
        Ok(state)
    }

    /// Converts head counts into fractions; everyone not exposed, infectious
    /// or recovered is susceptible.
    pub fn from_counts(population: f64, exposed: f64, infectious: f64, recovered: f64) -> Result<Self> {
        if !(population > 0.0 && population.is_finite()) {
            return Err(Error::InvalidState(format!("population {population} must be positive")));
        }
        let seeded = exposed + infectious + recovered;
        if exposed < 0.0 || infectious < 0.0 || recovered < 0.0 || seeded > population {
            return Err(Error::InvalidState(format!(
                "initial counts E={exposed}, I={infectious}, R={recovered} do not fit a population of {population}"
            )));
        }
        let e = exposed / population;
        let i = infectious / population;
        let r = recovered / population;
        Self::new(1.0 - e - i - r, e, i, r)
    }

    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s", self.s), ("e", self.e), ("i", self.i), ("r", self.r)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidState(format!("{name} = {v} outside [0, 1]")));
            }
        }
        let total = self.total();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidState(format!("compartments sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// Advances one day. `contact_scale` multiplies the contact rate (the
/// confinement weight times any seasonal factor) and must lie in `[0, 1]`.
pub fn seir_step(
    state: &CompartmentState,
    params: &EpidemicParams,
    contact_scale: f64,
) -> Result<CompartmentState> {
    state.validate()?;
    params.validate()?;
    if !(0.0..=1.0).contains(&contact_scale) {
        return Err(Error::OutOfRange(format!("contact scale {contact_scale}")));
    }

    let infections = contact_scale * params.beta * state.s * state.i;
    let onsets = params.alpha * state.e;
    let removals = params.gamma * state.i;

    let next = CompartmentState {
        s: settle("s", state.s - infections)?,
        e: settle("e", state.e + infections - onsets)?,
        i: settle("i", state.i + onsets - removals)?,
        r: settle("r", state.r + removals)?,
    };
    Ok(next)
}

fn settle(name: &str, v: f64) -> Result<f64> {
    if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&v) {
        return Err(Error::NumericalBlowup(format!("{name} = {v}")));
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Runs `contact_scales.len()` days from `initial`. The returned trajectory
/// has one more entry than there are scales; entry 0 is `initial`.
pub fn simulate_trajectory(
    initial: &CompartmentState,
    params: &EpidemicParams,
    contact_scales: &[f64],
) -> Result<Vec<CompartmentState>> {
    if contact_scales.is_empty() {
        return Err(Error::Empty("contact scale list".into()));
    }
    initial.validate()?;
    let mut trajectory = Vec::with_capacity(contact_scales.len() + 1);
    trajectory.push(*initial);
    let mut current = *initial;
    for (idx, &scale) in contact_scales.iter().enumerate() {
        current = seir_step(&current, params, scale).map_err(|e| Error::at_day(idx + 1, e))?;
        trajectory.push(current);
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textbook() -> EpidemicParams {
        EpidemicParams::new(0.2, 2.0, 0.2).unwrap()
    }

    // Second, independent formulation of the four update lines.
    fn oracle_step(s: f64, e: f64, i: f64, r: f64, a: f64, b: f64, g: f64, k: f64) -> [f64; 4] {
        let new_exposed = k * b * s * i;
        [s - new_exposed, e + new_exposed - a * e, i + a * e - g * i, r + g * i]
    }

    #[test]
    fn no_seed_is_fixed_point() {
        let start = CompartmentState::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let next = seir_step(&start, &textbook(), 1.0).unwrap();
        assert_eq!(next, start);
    }

    #[test]
    fn hand_computed_step() {
        let start = CompartmentState::new(0.9, 0.0, 0.1, 0.0).unwrap();
        let next = seir_step(&start, &textbook(), 1.0).unwrap();
        let [s, e, i, r] = oracle_step(0.9, 0.0, 0.1, 0.0, 0.2, 2.0, 0.2, 1.0);
        assert!((next.s - 0.72).abs() < 1e-15 && (next.s - s).abs() < 1e-15);
        assert!((next.e - 0.18).abs() < 1e-15 && (next.e - e).abs() < 1e-15);
        assert!((next.i - 0.08).abs() < 1e-15 && (next.i - i).abs() < 1e-15);
        assert!((next.r - 0.02).abs() < 1e-15 && (next.r - r).abs() < 1e-15);
    }

    #[test]
    fn zero_contact_only_progresses_existing_cases() {
        let start = CompartmentState::new(0.9, 0.0, 0.1, 0.0).unwrap();
        let next = seir_step(&start, &textbook(), 0.0).unwrap();
        assert_eq!(next.s, 0.9);
        assert_eq!(next.e, 0.0);
        assert!((next.i - 0.08).abs() < 1e-15);
        assert!((next.r - 0.02).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad_sum = CompartmentState { s: 0.5, e: 0.0, i: 0.0, r: 0.0 };
        assert!(matches!(seir_step(&bad_sum, &textbook(), 1.0), Err(Error::InvalidState(_))));
        let ok = CompartmentState::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(seir_step(&ok, &textbook(), 1.5).is_err());
        assert!(seir_step(&ok, &textbook(), -0.1).is_err());
        assert!(EpidemicParams::new(0.0, 1.0, 0.2).is_err());
        assert!(EpidemicParams::new(0.2, 1.0, 1.2).is_err());
        assert!(EpidemicParams::new(0.2, -1.0, 0.2).is_err());
    }

    #[test]
    fn unstable_parameters_surface_as_blowup() {
        // beta * s * i = 50 * 0.5 * 0.5 removes far more than s holds.
        let params = EpidemicParams::new(0.2, 50.0, 0.2).unwrap();
        let state = CompartmentState::new(0.5, 0.0, 0.5, 0.0).unwrap();
        assert!(matches!(seir_step(&state, &params, 1.0), Err(Error::NumericalBlowup(_))));
    }

    #[test]
    fn trajectory_composes_steps() {
        let start = CompartmentState::from_counts(126e6, 1000.0, 0.0, 0.0).unwrap();
        let params = EpidemicParams::covid19();
        let traj = simulate_trajectory(&start, &params, &[1.0, 1.0]).unwrap();
        assert_eq!(traj.len(), 3);
        let mut manual = [start.s, start.e, start.i, start.r];
        for day in 1..=2 {
            let [s, e, i, r] = manual;
            manual = oracle_step(s, e, i, r, params.alpha, params.beta, params.gamma, 1.0);
            let got = traj[day];
            assert_eq!([got.s, got.e, got.i, got.r], manual);
        }
    }

    #[test]
    fn trajectory_without_seed_is_constant() {
        let start = CompartmentState::new(0.7, 0.0, 0.0, 0.3).unwrap();
        let traj = simulate_trajectory(&start, &textbook(), &[1.0, 0.5, 0.25]).unwrap();
        assert_eq!(traj.len(), 4);
        assert!(traj.iter().all(|s| *s == start));
    }

    #[test]
    fn trajectory_error_carries_day() {
        let params = EpidemicParams::new(0.2, 15.0, 0.2).unwrap();
        let start = CompartmentState::new(0.98, 0.0, 0.02, 0.0).unwrap();
        let err = simulate_trajectory(&start, &params, &[1.0; 10]).unwrap_err();
        assert!(matches!(err, Error::AtDay { day, .. } if day > 1));
        assert!(simulate_trajectory(&start, &params, &[]).is_err());
    }

    #[test]
    fn reproduction_number() {
        let r0 = EpidemicParams::covid19().basic_reproduction_number();
        assert!((r0 - 2.6).abs() < 1e-3);
    }
}
