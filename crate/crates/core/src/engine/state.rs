use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::embedding::Embedding;
use super::{BoredomVariant, SimulatorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub step: usize,
    pub item: usize,
    pub main_topic: usize,
}

/// Evolving user state within one session.
///
/// The base embedding is never overwritten by boredom: masking happens when
/// the effective embedding is read, and a topic is masked while its timeout
/// is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub base_user_embedding: Embedding,
    pub bored_timeouts: Vec<usize>,
    /// Clicks still inside the boredom recency window, oldest first.
    pub click_history: VecDeque<ClickRecord>,
    pub step_index: usize,
}

impl SessionState {
    pub fn new(user: Embedding) -> Self {
        let n = user.dim();
        SessionState {
            base_user_embedding: user,
            bored_timeouts: vec![0; n],
            click_history: VecDeque::new(),
            step_index: 0,
        }
    }

    pub fn bored_topic_count(&self) -> usize {
        self.bored_timeouts.iter().filter(|&&t| t > 0).count()
    }

    pub fn is_bored(&self) -> bool {
        self.bored_timeouts.iter().any(|&t| t > 0)
    }

    pub fn effective_embedding(&self, config: &SimulatorConfig) -> Embedding {
        let mut e = self.base_user_embedding.clone();
        match config.boredom_variant {
            BoredomVariant::None => {}
            BoredomVariant::ChurnAndReturn if self.is_bored() => {
                e.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
            }
            _ => {
                for (x, &t) in e.as_mut_slice().iter_mut().zip(&self.bored_timeouts) {
                    if t > 0 {
                        *x = 0.0;
                    }
                }
            }
        }
        e
    }

    pub fn decrement_timeouts(&mut self) {
        for t in &mut self.bored_timeouts {
            *t = t.saturating_sub(1);
        }
    }

    /// Appends clicks for the current step and forgets clicks that left the window.
    pub fn record_clicks(&mut self, clicks: impl IntoIterator<Item = ClickRecord>, t_b: usize) {
        self.click_history.extend(clicks);
        let now = self.step_index;
        while let Some(front) = self.click_history.front() {
            if front.step + t_b <= now {
                self.click_history.pop_front();
            } else {
                break;
            }
        }
    }

    /// The `n_b` most recent clicks from the last `t_b` steps.
    pub fn window(&self, config: &SimulatorConfig) -> impl Iterator<Item = &ClickRecord> {
        let now = self.step_index;
        let in_window: Vec<&ClickRecord> = self
            .click_history
            .iter()
            .filter(|c| c.step + config.t_b > now)
            .collect();
        let skip = in_window.len().saturating_sub(config.n_b);
        in_window.into_iter().skip(skip)
    }

    pub fn topic_counts(&self, config: &SimulatorConfig) -> Vec<usize> {
        let mut counts = vec![0; config.n_topics];
        for c in self.window(config) {
            counts[c.main_topic] += 1;
        }
        counts
    }
}

/// Topics whose main-topic count in the recent window reaches the threshold
/// and that are not already bored.
pub fn detect_boredom(state: &SessionState, config: &SimulatorConfig) -> Vec<usize> {
    if !config.has_boredom() {
        return Vec::new();
    }
    state
        .topic_counts(config)
        .into_iter()
        .enumerate()
        .filter(|&(t, count)| {
            let hit = if config.strict_boredom_threshold {
                count > config.tau_b
            } else {
                count >= config.tau_b
            };
            hit && state.bored_timeouts[t] == 0
        })
        .map(|(t, _)| t)
        .collect()
}

pub fn apply_boredom(state: &mut SessionState, topics: &[usize], config: &SimulatorConfig) {
    if topics.is_empty() {
        return;
    }
    match config.boredom_variant {
        BoredomVariant::None => {}
        BoredomVariant::LossOfInterest => {
            for &t in topics {
                state.bored_timeouts[t] = config.t_b;
            }
        }
        BoredomVariant::ChurnAndReturn => {
            state.bored_timeouts.iter_mut().for_each(|t| *t = config.t_b);
        }
    }
}

/// Drifts the base embedding toward the mean of the clicked item embeddings.
pub fn apply_influence(
    state: &mut SessionState,
    clicked: &[&Embedding],
    omega: f64,
    renormalize: bool,
) {
    if clicked.is_empty() || omega == 1.0 {
        return;
    }
    let n = clicked.len() as f64;
    let base = state.base_user_embedding.as_mut_slice();
    for (j, x) in base.iter_mut().enumerate() {
        let mean = clicked.iter().map(|e| e.as_slice()[j]).sum::<f64>() / n;
        *x = omega * *x + (1.0 - omega) * mean;
    }
    if renormalize {
        state.base_user_embedding.normalize();
    }
}
