//! REINFORCE with a linear softmax scorer and the top-K off-policy correction.
//!
//! Logits are `W [features; 1]`, one row per item. Slates are sampled
//! without replacement by renormalizing the softmax after each pick. Each
//! step credits one item: the first clicked item (reward 1), or the rank-1
//! item with reward 0 when nothing was clicked.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Observability, Observation, Simulator, SimulatorConfig, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

use super::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReinforceConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    /// Completed episodes kept for the next update.
    pub buffer_size: usize,
    /// Episodes between updates; each update drains the buffer.
    pub update_every: usize,
    pub top_k_correction: bool,
    /// Seed for the small random weight initialization.
    pub init_seed: u64,
    pub init_scale: f64,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        ReinforceConfig {
            learning_rate: 0.2,
            gamma: 0.0,
            buffer_size: 100,
            update_every: 1,
            top_k_correction: true,
            init_seed: 0,
            init_scale: 0.0,
        }
    }
}

impl ReinforceConfig {
    /// Discount 0 in static environments, 0.8 when boredom or influence is on.
    pub fn for_env(config: &SimulatorConfig) -> Self {
        let dynamic = config.has_boredom() || config.omega < 1.0;
        ReinforceConfig {
            gamma: if dynamic { 0.8 } else { 0.0 },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::default().with_toml(text)
    }

    /// Keys present in `text` replace the matching fields of `self`.
    pub fn with_toml(&self, text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::InvalidConfig(e.to_string());
        let mut base = toml::Table::try_from(self).map_err(|e| bad(&e))?;
        let overrides: toml::Table = text.parse().map_err(|e| bad(&e))?;
        base.extend(overrides);
        let cfg: Self = base.try_into().map_err(|e| bad(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..=1.0).contains(&self.gamma)
            && self.buffer_size > 0
            && (1..=self.buffer_size).contains(&self.update_every)
            && self.init_scale >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad REINFORCE settings: {self:?}")))
        }
    }
}

/// One training step as seen by the update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Policy features including the trailing bias term.
    pub features: Vec<f64>,
    pub slate: Vec<usize>,
    pub credited_item: usize,
    pub reward: f64,
}

/// Affine re-expression of observation blocks so that every feature other
/// than the bias is zero in the common case.
#[derive(Debug, Clone, Copy)]
enum FeatureMap {
    /// Partial observations: slate ids scaled into [0, 1).
    ScaleIds { len: usize, scale: f64 },
    /// Full observations: the timeout block from `from` on becomes the elapsed
    /// fraction, 0 for topics that are not bored.
    FlipTimeouts { from: usize },
}

#[derive(Debug, Clone)]
pub struct LinearSoftmaxPolicy {
    config: ReinforceConfig,
    n_items: usize,
    slate_size: usize,
    n_features: usize,
    feature_map: FeatureMap,
    weights: Vec<f64>,
    episode: Vec<StepRecord>,
    buffer: VecDeque<Vec<StepRecord>>,
    since_update: usize,
}

impl LinearSoftmaxPolicy {
    pub fn new(env: &SimulatorConfig, config: ReinforceConfig) -> Result<Self> {
        config.validate()?;
        let n_features = env.observation_len() + 1;
        let mut weights = vec![0.0; env.n_items * n_features];
        if config.init_scale > 0.0 {
            let mut rng = seeded(config.init_seed);
            for w in &mut weights {
                *w = config.init_scale * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
        let feature_map = match env.observability {
            Observability::Partial => FeatureMap::ScaleIds {
                len: env.slate_size,
                scale: 1.0 / env.n_items as f64,
            },
            Observability::Full => FeatureMap::FlipTimeouts {
                from: 2 * env.n_topics,
            },
        };
        Ok(LinearSoftmaxPolicy {
            config,
            n_items: env.n_items,
            slate_size: env.slate_size,
            n_features,
            feature_map,
            weights,
            episode: Vec::new(),
            buffer: VecDeque::new(),
            since_update: 0,
        })
    }

    pub fn config(&self) -> &ReinforceConfig {
        &self.config
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                actual: weights.len(),
            });
        }
        self.weights = weights;
        Ok(())
    }

    pub fn buffered_episodes(&self) -> usize {
        self.buffer.len()
    }

    /// Observation after the [`FeatureMap`], plus a bias term.
    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.n_features);
        f.extend_from_slice(obs.as_slice());
        match self.feature_map {
            FeatureMap::ScaleIds { len, scale } => f[..len].iter_mut().for_each(|x| *x *= scale),
            FeatureMap::FlipTimeouts { from } => f[from..].iter_mut().for_each(|x| *x = 1.0 - *x),
        }
        f.push(1.0);
        f
    }

    fn logits_with(weights: &[f64], features: &[f64]) -> Vec<f64> {
        weights
            .chunks_exact(features.len())
            .map(|row| row.iter().zip(features).map(|(w, x)| w * x).sum())
            .collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        p
    }

    /// Single-item softmax over the whole catalog.
    pub fn probabilities(&self, features: &[f64]) -> Vec<f64> {
        Self::softmax(&Self::logits_with(&self.weights, features))
    }

    /// Samples `slate_size` distinct items; returns each pick's log-probability
    /// under the renormalized softmax at the time it was drawn.
    pub fn sample_slate<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> (Vec<usize>, Vec<f64>) {
        let mut p = self.probabilities(features);
        let mut slate = Vec::with_capacity(self.slate_size);
        let mut log_probs = Vec::with_capacity(self.slate_size);
        for _ in 0..self.slate_size {
            let total: f64 = p.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in p.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if u < w {
                    break;
                }
                u -= w;
            }
            // Rounding can leave `u` past the last positive weight; the last one wins.
            let i = pick.unwrap_or_else(|| (0..p.len()).find(|i| !slate.contains(i)).unwrap());
            log_probs.push((p[i] / total).ln());
            slate.push(i);
            p[i] = 0.0;
        }
        (slate, log_probs)
    }

    /// Per-step coefficients `lambda_K * G_t`, evaluated at the current weights
    /// and treated as constants by the gradient.
    pub fn step_coefficients(&self, episodes: &[Vec<StepRecord>]) -> Vec<f64> {
        let k = self.slate_size as i32;
        let mut out = Vec::new();
        for ep in episodes {
            let mut returns = vec![0.0; ep.len()];
            let mut g = 0.0;
            for (t, s) in ep.iter().enumerate().rev() {
                g = s.reward + self.config.gamma * g;
                returns[t] = g;
            }
            for (s, g) in ep.iter().zip(returns) {
                let correction = if self.config.top_k_correction {
                    let pi = self.probabilities(&s.features)[s.credited_item];
                    k as f64 * (1.0 - pi).powi(k - 1)
                } else {
                    1.0
                };
                out.push(correction * g);
            }
        }
        out
    }

    /// `sum_t c_t log pi(a_t | s_t)` at the given weights.
    pub fn surrogate(&self, weights: &[f64], episodes: &[Vec<StepRecord>], coefficients: &[f64]) -> f64 {
        episodes
            .iter()
            .flatten()
            .zip(coefficients)
            .map(|(s, c)| {
                let p = Self::softmax(&Self::logits_with(weights, &s.features));
                c * p[s.credited_item].ln()
            })
            .sum()
    }

    /// Analytic gradient of [`surrogate`](Self::surrogate) at the current weights.
    pub fn gradient(&self, episodes: &[Vec<StepRecord>], coefficients: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.weights.len()];
        for (s, &c) in episodes.iter().flatten().zip(coefficients) {
            if c == 0.0 {
                continue;
            }
            let p = self.probabilities(&s.features);
            for (i, row) in grad.chunks_exact_mut(self.n_features).enumerate() {
                let d = c * (f64::from(u8::from(i == s.credited_item)) - p[i]);
                for (g, x) in row.iter_mut().zip(&s.features) {
                    *g += d * x;
                }
            }
        }
        grad
    }

    /// One ascent step on the buffered episodes, averaged per episode.
    pub fn update(&mut self, episodes: &[Vec<StepRecord>]) -> Result<()> {
        if episodes.is_empty() {
            return Err(Error::InvalidArgument("no episodes to learn from".into()));
        }
        let coefficients = self.step_coefficients(episodes);
        if coefficients.iter().all(|&c| c == 0.0) {
            return Ok(());
        }
        let grad = self.gradient(episodes, &coefficients);
        let step = self.config.learning_rate / episodes.len() as f64;
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w += step * g;
        }
        Ok(())
    }
}

impl Policy for LinearSoftmaxPolicy {
    fn name(&self) -> &str {
        "reinforce"
    }

    fn select(&self, _env: &Simulator, obs: &Observation, rng: &mut SimRng) -> Vec<usize> {
        self.sample_slate(&self.features(obs), rng).0
    }

    fn is_learning(&self) -> bool {
        true
    }

    fn train_select(&mut self, _env: &Simulator, obs: &Observation, rng: &mut SimRng) -> Vec<usize> {
        let features = self.features(obs);
        let (slate, _) = self.sample_slate(&features, rng);
        self.episode.push(StepRecord {
            features,
            credited_item: slate[0],
            slate: slate.clone(),
            reward: 0.0,
        });
        slate
    }

    fn train_feedback(&mut self, outcome: &StepOutcome) {
        let Some(last) = self.episode.last_mut() else {
            return;
        };
        if let Some(r) = outcome.info.clicks.iter().position(|&c| c) {
            last.credited_item = last.slate[r];
            last.reward = 1.0;
        }
    }

    fn train_episode_end(&mut self) {
        if self.episode.is_empty() {
            return;
        }
        if self.buffer.len() == self.config.buffer_size {
            self.buffer.pop_front();
        }
        self.buffer.push_back(std::mem::take(&mut self.episode));
        self.since_update += 1;
        if self.since_update >= self.config.update_every {
            let episodes: Vec<Vec<StepRecord>> = self.buffer.drain(..).collect();
            self.update(&episodes).expect("buffer is non-empty");
            self.since_update = 0;
        }
    }
}
