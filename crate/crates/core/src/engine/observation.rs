use serde::{Deserialize, Serialize};

use super::state::SessionState;
use super::{Observability, SimulatorConfig};

/// Flat observation vector.
///
/// Full layout: `[effective user embedding | recent-topic histogram | timeouts]`,
/// each of length `n_topics`. Partial layout:
/// `[slate item ids | click indicators | recent-topic histogram]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Main-topic counts of the recent click window, divided by `tau_b` and clipped to 1.
pub fn topic_histogram(state: &SessionState, config: &SimulatorConfig) -> Vec<f64> {
    state
        .topic_counts(config)
        .into_iter()
        .map(|c| (c as f64 / config.tau_b as f64).min(1.0))
        .collect()
}

/// Remaining timeout per topic over `t_b`; topics that are not bored report 1.
pub fn timeout_vector(state: &SessionState, config: &SimulatorConfig) -> Vec<f64> {
    let t_b = config.t_b as f64;
    state
        .bored_timeouts
        .iter()
        .map(|&t| if t == 0 { 1.0 } else { t as f64 / t_b })
        .collect()
}

pub fn full_observation(state: &SessionState, config: &SimulatorConfig) -> Observation {
    let mut v = Vec::with_capacity(3 * config.n_topics);
    v.extend_from_slice(state.effective_embedding(config).as_slice());
    v.extend(topic_histogram(state, config));
    v.extend(timeout_vector(state, config));
    Observation(v)
}

pub fn build_observation(
    state: &SessionState,
    last_slate: &[usize],
    last_clicks: &[bool],
    config: &SimulatorConfig,
) -> Observation {
    match config.observability {
        Observability::Full => full_observation(state, config),
        Observability::Partial => {
            let mut v = Vec::with_capacity(config.observation_len());
            v.extend(last_slate.iter().map(|&i| i as f64));
            v.extend(last_clicks.iter().map(|&c| if c { 1.0 } else { 0.0 }));
            v.extend(topic_histogram(state, config));
            Observation(v)
        }
    }
}
