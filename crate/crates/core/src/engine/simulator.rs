use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::envs::TopicPrior;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng, Stream};

use super::click::{check_slate, click_probabilities, sample_clicks, slate_relevances};
use super::embedding::{generate_catalog, sample_user, Embedding};
use super::observation::{build_observation, full_observation, Observation};
use super::state::{apply_boredom, apply_influence, detect_boredom, ClickRecord, SessionState};
use super::SimulatorConfig;

/// Diagnostics attached to every transition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Relevance of each slate item against the effective user embedding.
    pub scores: Vec<f64>,
    pub clicks: Vec<bool>,
    /// Topics masked by boredom while this slate was evaluated.
    pub bored_topics: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: usize,
    pub terminated: bool,
    pub info: StepInfo,
}

/// One simulated user session at a time over a fixed catalog.
///
/// Not thread-safe for shared mutation, but `Send`: run one instance per
/// worker to parallelize.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimulatorConfig,
    catalog: Vec<Embedding>,
    main_topics: Vec<usize>,
    topic_prior: Option<TopicPrior>,
    user_rng: SimRng,
    click_rng: SimRng,
    state: SessionState,
    last_slate: Vec<usize>,
    last_clicks: Vec<bool>,
    last_info: StepInfo,
    terminated: bool,
}

impl Simulator {
    /// Synthetic catalog drawn from the catalog stream of `master_seed`.
    pub fn new(config: SimulatorConfig) -> Result<Self> {
        let catalog = generate_catalog(&config, config.master_seed)?;
        Self::with_catalog(config, catalog, None)
    }

    pub fn with_catalog(
        config: SimulatorConfig,
        catalog: Vec<Embedding>,
        topic_prior: Option<TopicPrior>,
    ) -> Result<Self> {
        config.validate()?;
        if catalog.len() != config.n_items {
            return Err(Error::InvalidConfig(format!(
                "catalog has {} items, config expects {}",
                catalog.len(),
                config.n_items
            )));
        }
        if let Some(bad) = catalog.iter().find(|e| e.dim() != config.n_topics) {
            return Err(Error::LengthMismatch {
                expected: config.n_topics,
                actual: bad.dim(),
            });
        }
        if let Some(p) = &topic_prior {
            if p.probabilities().len() != config.n_topics {
                return Err(Error::LengthMismatch {
                    expected: config.n_topics,
                    actual: p.probabilities().len(),
                });
            }
        }
        let main_topics = catalog.iter().map(Embedding::main_topic).collect();
        let seed = config.master_seed;
        Ok(Simulator {
            state: SessionState::new(Embedding::zeros(config.n_topics)),
            catalog,
            main_topics,
            topic_prior,
            user_rng: stream_rng(seed, Stream::Users),
            click_rng: stream_rng(seed, Stream::Clicks),
            last_slate: Vec::new(),
            last_clicks: Vec::new(),
            last_info: StepInfo::default(),
            terminated: true,
            config,
        })
    }

    pub fn config(&self) -> &SimulatorConfig {
        &self.config
    }

    pub fn catalog(&self) -> &[Embedding] {
        &self.catalog
    }

    pub fn main_topics(&self) -> &[usize] {
        &self.main_topics
    }

    pub fn topic_prior(&self) -> Option<&TopicPrior> {
        self.topic_prior.as_ref()
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    /// Boredom-masked user embedding. Meant for oracle policies only.
    pub fn oracle_user_embedding(&self) -> Embedding {
        self.state.effective_embedding(&self.config)
    }

    /// Full-state observation regardless of the configured observability.
    pub fn full_observation(&self) -> Observation {
        full_observation(&self.state, &self.config)
    }

    pub fn observation(&self) -> Observation {
        build_observation(&self.state, &self.last_slate, &self.last_clicks, &self.config)
    }

    /// Info of the most recent transition (the initial slate right after a reset).
    pub fn last_info(&self) -> &StepInfo {
        &self.last_info
    }

    /// Starts a new session with a freshly sampled user.
    ///
    /// With a seed, the user and click streams restart from it; the catalog
    /// is unaffected. An initial random slate is shown inside the reset: its
    /// clicks enter the history but are not rewarded and do not count
    /// toward the session length.
    pub fn reset(&mut self, seed: Option<u64>) -> Observation {
        if let Some(s) = seed {
            self.user_rng = stream_rng(s, Stream::Users);
            self.click_rng = stream_rng(s, Stream::Clicks);
        }
        let user = sample_user(&self.config, &mut self.user_rng, self.topic_prior.as_ref())
            .expect("prior validated at construction");
        self.state = SessionState::new(user);
        let n = self.config.n_items;
        let slate = index::sample(&mut self.click_rng, n, self.config.slate_size).into_vec();
        let info = self.transition(&slate);
        self.last_slate = slate;
        self.last_clicks = info.clicks.clone();
        self.last_info = info;
        self.terminated = false;
        self.observation()
    }

    pub fn step(&mut self, slate: &[usize]) -> Result<StepOutcome> {
        if self.terminated {
            return Err(Error::SessionTerminated);
        }
        check_slate(slate, &self.config)?;
        self.state.step_index += 1;
        let info = self.transition(slate);
        self.last_slate.clear();
        self.last_slate.extend_from_slice(slate);
        self.last_clicks.clone_from(&info.clicks);
        self.terminated = self.state.step_index >= self.config.session_length;
        let reward = info.clicks.iter().filter(|&&c| c).count();
        self.last_info = info.clone();
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            terminated: self.terminated,
            info,
        })
    }

    /// Boredom decrement, clicks, boredom detection, then influence.
    fn transition(&mut self, slate: &[usize]) -> StepInfo {
        let cfg = &self.config;
        let bored_topics = self.state.bored_topic_count();
        let user = self.state.effective_embedding(cfg);
        self.state.decrement_timeouts();

        let scores = slate_relevances(user.as_slice(), slate, &self.catalog);
        let clicks = sample_clicks(&click_probabilities(&scores, cfg), &mut self.click_rng);

        let step = self.state.step_index;
        let clicked: Vec<usize> = slate
            .iter()
            .zip(&clicks)
            .filter(|(_, &c)| c)
            .map(|(&i, _)| i)
            .collect();
        let main_topics = &self.main_topics;
        self.state.record_clicks(
            clicked.iter().map(|&item| ClickRecord {
                step,
                item,
                main_topic: main_topics[item],
            }),
            cfg.t_b,
        );
        let triggered = detect_boredom(&self.state, cfg);
        apply_boredom(&mut self.state, &triggered, cfg);

        let embeddings: Vec<&Embedding> = clicked.iter().map(|&i| &self.catalog[i]).collect();
        apply_influence(&mut self.state, &embeddings, cfg.omega, cfg.renormalize_influence);

        StepInfo {
            scores,
            clicks,
            bored_topics,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::builtin;

    fn sim(name: &str) -> Simulator {
        Simulator::new(builtin(name, None).unwrap().config).unwrap()
    }

    #[test]
    fn step_before_reset_fails() {
        let mut s = sim("SingleItem-Static");
        assert!(matches!(s.step(&[0]), Err(Error::SessionTerminated)));
    }

    #[test]
    fn malformed_slates_rejected_without_side_effects() {
        let mut s = sim("SlateTopK-Bored");
        s.reset(Some(1));
        let before = s.state().clone();
        let dup: Vec<usize> = vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 8];
        assert!(matches!(s.step(&dup), Err(Error::MalformedSlate(_))));
        assert!(matches!(s.step(&[0, 1]), Err(Error::MalformedSlate(_))));
        let oob: Vec<usize> = (995..1005).collect();
        assert!(matches!(s.step(&oob), Err(Error::MalformedSlate(_))));
        assert_eq!(s.state(), &before);
        assert!(s.step(&(0..10).collect::<Vec<_>>()).is_ok());
    }

    #[test]
    fn terminates_exactly_at_session_length() {
        let mut s = sim("SlateRerank-Static");
        s.reset(Some(4));
        let slate: Vec<usize> = (0..10).collect();
        for t in 1..=10 {
            let out = s.step(&slate).unwrap();
            assert_eq!(out.terminated, t == 10);
        }
        assert!(matches!(s.step(&slate), Err(Error::SessionTerminated)));
    }

    #[test]
    fn reset_records_initial_slate() {
        let mut s = sim("SlateTopK-PartialObs");
        let obs = s.reset(Some(9));
        assert_eq!(obs.len(), 30);
        assert_eq!(s.last_info().scores.len(), 10);
        assert_eq!(s.state().step_index, 0);
    }
}
