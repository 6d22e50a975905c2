use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregate of best rewards over independent runs. `std` is the population
/// standard deviation (divides by the count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub avg: f64,
    pub max: f64,
    pub min: f64,
    pub std: f64,
    pub mean_wall_time: f64,
    pub runs: usize,
}

impl SummaryStats {
    pub fn from_samples(rewards: &[f64], wall_times: &[f64]) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::Empty("no completed runs to summarize".into()));
        }
        if wall_times.len() != rewards.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rewards but {} wall times",
                rewards.len(),
                wall_times.len()
            )));
        }
        if let Some(bad) = rewards.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("run reward {bad}")));
        }
        let n = rewards.len() as f64;
        let avg = rewards.iter().sum::<f64>() / n;
        let var = rewards.iter().map(|r| (r - avg).powi(2)).sum::<f64>() / n;
        let max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = rewards.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(SummaryStats {
            avg: avg.clamp(min, max),
            max,
            min,
            std: var.sqrt(),
            mean_wall_time: wall_times.iter().sum::<f64>() / n,
            runs: rewards.len(),
        })
    }
}
