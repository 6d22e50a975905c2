//! Discrete-time SEIR epidemic simulation and search for confinement
//! policies over a fixed horizon.
//!
//! The crate is layered bottom-up:
//!
//! * [`seir`]: the per-day compartment update.
//! * [`scenario`]: phases, rewards, bed/temperature schedules and the
//!   phase-ordering constraint; turns an action sequence into a total reward.
//! * [`ga`], [`dqn`] (on top of [`nn`]) and [`harness::random_search`]:
//!   the three optimizers.
//! * [`harness`]: configs, multi-run experiments, CSV/SVG output.

pub mod dqn;
pub mod error;
pub mod ga;
pub mod harness;
pub mod nn;
pub mod scenario;
pub mod seir;

pub use error::{Error, Result};
pub use scenario::{ActionSequence, EvaluationResult, PatternState, Scenario};
pub use seir::{CompartmentState, EpidemicParams};

/// Builds the deterministic RNG used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
