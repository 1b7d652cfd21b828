//! Recommendation policies.
//!
//! `select` never mutates the policy, so evaluation cannot leak into
//! learning. Learning policies additionally implement the `train_*` hooks,
//! which the harness calls during training episodes only.

mod baselines;
mod reinforce;

pub use baselines::{
    greedy_oracle_slate, mixture_logging_slate, random_slate, rank_by_scores,
    reverse_oracle_slate, EmbeddingGreedy, GreedyOracle, MixtureLogging, RandomPolicy,
    ReverseOracle, UserProjection,
};
pub use reinforce::{LinearSoftmaxPolicy, ReinforceConfig, StepRecord};

use crate::engine::{Observation, Simulator, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const POLICY_NAMES: [&str; 5] = ["random", "greedy", "reverse", "mixture", "reinforce"];

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Chooses a slate for the current state of `env`. Oracle policies read
    /// the true user state from `env`; others use only `obs`.
    fn select(&self, env: &Simulator, obs: &Observation, rng: &mut SimRng) -> Vec<usize>;

    fn is_learning(&self) -> bool {
        false
    }

    /// Training-time selection; may record what it needs for the update.
    fn train_select(&mut self, env: &Simulator, obs: &Observation, rng: &mut SimRng) -> Vec<usize> {
        self.select(env, obs, rng)
    }

    fn train_feedback(&mut self, _outcome: &StepOutcome) {}

    fn train_episode_end(&mut self) {}
}

/// Builds a policy by name for the given environment.
pub fn make_policy(name: &str, env: &Simulator) -> Result<Box<dyn Policy>> {
    Ok(match name {
        "random" => Box::new(RandomPolicy),
        "greedy" => Box::new(GreedyOracle),
        "reverse" => Box::new(ReverseOracle),
        "mixture" => Box::new(MixtureLogging::default()),
        "reinforce" => Box::new(LinearSoftmaxPolicy::new(
            env.config(),
            ReinforceConfig::for_env(env.config()),
        )?),
        _ => return Err(Error::UnknownPolicy(name.to_string())),
    })
}
