//! Deterministic, batch-vectorized reinforcement-learning environments for
//! ARC-style grid puzzles.
//!
//! The episode core lives in [`env`]: a pure `reset`/`step` pair over a
//! fixed-capacity [`EnvState`](env::EnvState). [`wrappers`] adapt the action
//! and observation spaces, [`environment::Environment`] bundles a configured
//! stack, and [`batch`] runs many lanes in parallel.

pub mod batch;
pub mod bench;
pub mod config;
pub mod env;
pub mod environment;
pub mod fetch;
pub mod grid;
pub mod ops;
pub mod prng;
pub mod render;
pub mod task;
pub mod wrappers;

pub use env::{Action, EnvParams, EnvState, Mode, Observation, RewardConfig, StepKind, Timestep};
pub use environment::Environment;
pub use grid::{PaddedGrid, SelectionMask};
pub use ops::OpId;
pub use prng::PrngKey;
pub use task::{RawTask, TaskBuffer};

/// Any error surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] grid::GridError),
    #[error(transparent)]
    Task(#[from] task::TaskError),
    #[error(transparent)]
    Env(#[from] env::EnvError),
    #[error(transparent)]
    Wrapper(#[from] wrappers::WrapperError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Fetch(#[from] fetch::FetchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
