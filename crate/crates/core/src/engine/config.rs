use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observability {
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoredomVariant {
    None,
    /// Only the offending topic is masked while its timeout runs.
    LossOfInterest,
    /// Every topic is masked, so the user cannot click until the timeout ends.
    ChurnAndReturn,
}

fn yes() -> bool {
    true
}

fn no() -> bool {
    false
}

/// Every simulator hyperparameter. Field names double as the keys of the
/// TOML configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    /// Agent steps per session (`L`).
    pub session_length: usize,
    /// Items per slate (`S`).
    pub slate_size: usize,
    pub n_items: usize,
    pub n_topics: usize,
    /// Sigmoid steepness of the attractiveness function.
    pub lambda_scale: f64,
    /// Relevance at which attractiveness is half of `alpha_range`.
    pub mu_shift: f64,
    pub alpha_range: f64,
    /// Examination decay: rank `r` is examined with probability `epsilon_decay^(r-1)`.
    pub epsilon_decay: f64,
    /// Most recent clicks considered by boredom detection.
    pub n_b: usize,
    /// Recency window (steps) for boredom detection, and timeout length.
    pub t_b: usize,
    /// Main-topic count that triggers boredom.
    pub tau_b: usize,
    /// Weight of the previous user embedding in the influence update.
    pub omega: f64,
    pub observability: Observability,
    pub boredom_variant: BoredomVariant,
    pub master_seed: u64,
    /// Rescale the user embedding to unit norm after each influence update.
    #[serde(default = "yes")]
    pub renormalize_influence: bool,
    /// Require strictly more than `tau_b` occurrences instead of at least `tau_b`.
    #[serde(default = "no")]
    pub strict_boredom_threshold: bool,
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("session_length", self.session_length),
            ("slate_size", self.slate_size),
            ("n_items", self.n_items),
            ("n_topics", self.n_topics),
            ("n_b", self.n_b),
            ("t_b", self.t_b),
            ("tau_b", self.tau_b),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.slate_size > self.n_items {
            return fail(format!(
                "slate_size {} exceeds n_items {}",
                self.slate_size, self.n_items
            ));
        }
        if self.tau_b > self.n_b {
            return fail(format!("tau_b {} exceeds n_b {}", self.tau_b, self.n_b));
        }
        if !(self.lambda_scale.is_finite() && self.mu_shift.is_finite()) {
            return fail("lambda_scale and mu_shift must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.alpha_range) {
            return fail(format!("alpha_range {} outside [0, 1]", self.alpha_range));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return fail(format!(
                "epsilon_decay {} outside (0, 1]",
                self.epsilon_decay
            ));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return fail(format!("omega {} outside [0, 1]", self.omega));
        }
        Ok(())
    }

    /// Reranking environments present the whole catalog at every step.
    pub fn is_rerank(&self) -> bool {
        self.n_items == self.slate_size
    }

    pub fn has_boredom(&self) -> bool {
        self.boredom_variant != BoredomVariant::None
    }

    pub fn observation_len(&self) -> usize {
        match self.observability {
            Observability::Full => 3 * self.n_topics,
            Observability::Partial => 2 * self.slate_size + self.n_topics,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimulatorConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}
