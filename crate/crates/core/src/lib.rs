//! Deterministic simulation of users interacting with slate recommenders.
//!
//! - [`engine`]: user model, click model, boredom and the reset/step contract.
//! - [`envs`]: the named environment roster and semi-synthetic catalogs.
//! - [`policies`]: baselines and a linear-softmax REINFORCE agent.
//! - [`log`], [`click_models`], [`mf`]: offline logs and models fitted on them.
//! - [`harness`]: experiment loops, metrics, sweeps and benchmarks.

pub mod click_models;
pub mod engine;
pub mod envs;
pub mod error;
pub mod harness;
pub mod log;
pub mod mf;
pub mod policies;
pub mod rng;

pub use engine::{Observation, Simulator, SimulatorConfig, StepOutcome};
pub use error::{Error, Result};
