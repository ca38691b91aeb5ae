//! Scheduling of dependent tasks on heterogeneous processors with two objectives: makespan and
//! reliability cost.
//!
//! - [`instance`]: task graph and platform model, P-method instance generator, TOML file format.
//! - [`schedule`]: per-processor task lists, heights, legality, and the objective evaluators.
//! - [`nsga2`]: non-dominated sorting, crowding distance, variation operators and the
//!   generational loop.
//! - [`oracle`]: exhaustive enumeration and an independent evaluator for small instances.

pub mod error;
pub mod instance;
pub mod nsga2;
pub mod oracle;
pub mod schedule;

pub use error::{Error, Result};
pub use instance::{ExecDistribution, GeneratorConfig, Instance, Platform, TaskGraph};
pub use nsga2::{EvolutionConfig, FrontPoint, GenerationStats, Individual, Population, RunResult};
pub use schedule::{Allocation, HeightMap, ObjectiveVector, Problem, Schedule, Timing};

/// Deterministic random stream used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeds a [`Rng`].
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
