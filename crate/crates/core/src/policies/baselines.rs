use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{dot, Embedding, Observation, Simulator};
use crate::error::{Error, Result};
use crate::rng::SimRng;

use super::Policy;

/// `s` distinct items drawn uniformly; a uniform permutation when `s == n_items`.
pub fn random_slate<R: Rng + ?Sized>(n_items: usize, s: usize, rng: &mut R) -> Vec<usize> {
    index::sample(rng, n_items, s).into_vec()
}

/// Top-`s` item ids by score, descending, ties by ascending id.
pub fn rank_by_scores(scores: &[f64], s: usize, descending: bool) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    let cmp = |a: &usize, b: &usize| {
        let (x, y) = (scores[*a], scores[*b]);
        let ord = if descending { y.total_cmp(&x) } else { x.total_cmp(&y) };
        ord.then(a.cmp(b))
    };
    if s < ids.len() {
        ids.select_nth_unstable_by(s, cmp);
        ids.truncate(s);
    }
    ids.sort_unstable_by(cmp);
    ids
}

fn relevances(user: &Embedding, catalog: &[Embedding]) -> Vec<f64> {
    catalog.iter().map(|e| dot(e.as_slice(), user.as_slice())).collect()
}

pub fn greedy_oracle_slate(user: &Embedding, catalog: &[Embedding], s: usize) -> Vec<usize> {
    rank_by_scores(&relevances(user, catalog), s, true)
}

pub fn reverse_oracle_slate(user: &Embedding, catalog: &[Embedding], s: usize) -> Vec<usize> {
    rank_by_scores(&relevances(user, catalog), s, false)
}

/// Per rank: the greedy item with probability `greedy_prob`, otherwise a
/// uniform item. A pick already in the slate is replaced by a fresh
/// uniform draw until it is new.
pub fn mixture_logging_slate<R: Rng + ?Sized>(
    user: &Embedding,
    catalog: &[Embedding],
    s: usize,
    greedy_prob: f64,
    rng: &mut R,
) -> Vec<usize> {
    let greedy = greedy_oracle_slate(user, catalog, s);
    let mut used = vec![false; catalog.len()];
    let mut slate = Vec::with_capacity(s);
    for &g in &greedy {
        let mut pick = if rng.gen::<f64>() < greedy_prob {
            g
        } else {
            rng.gen_range(0..catalog.len())
        };
        while used[pick] {
            pick = rng.gen_range(0..catalog.len());
        }
        used[pick] = true;
        slate.push(pick);
    }
    slate
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&self, env: &Simulator, _obs: &Observation, rng: &mut SimRng) -> Vec<usize> {
        let c = env.config();
        random_slate(c.n_items, c.slate_size, rng)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyOracle;

impl Policy for GreedyOracle {
    fn name(&self) -> &str {
        "greedy"
    }

    fn select(&self, env: &Simulator, _obs: &Observation, _rng: &mut SimRng) -> Vec<usize> {
        greedy_oracle_slate(&env.oracle_user_embedding(), env.catalog(), env.config().slate_size)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReverseOracle;

impl Policy for ReverseOracle {
    fn name(&self) -> &str {
        "reverse"
    }

    fn select(&self, env: &Simulator, _obs: &Observation, _rng: &mut SimRng) -> Vec<usize> {
        reverse_oracle_slate(&env.oracle_user_embedding(), env.catalog(), env.config().slate_size)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MixtureLogging {
    pub greedy_prob: f64,
}

impl Default for MixtureLogging {
    fn default() -> Self {
        MixtureLogging { greedy_prob: 0.5 }
    }
}

impl Policy for MixtureLogging {
    fn name(&self) -> &str {
        "mixture"
    }

    fn select(&self, env: &Simulator, _obs: &Observation, rng: &mut SimRng) -> Vec<usize> {
        mixture_logging_slate(
            &env.oracle_user_embedding(),
            env.catalog(),
            env.config().slate_size,
            self.greedy_prob,
            rng,
        )
    }
}

/// Affine map from the true user embedding to the space of an item table.
///
/// `weights` is `dim x (n_topics + 1)` with the bias in the last column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserProjection {
    Identity,
    Linear { weights: Vec<Vec<f64>> },
}

impl UserProjection {
    /// Least-squares fit of `targets[k] ~ W [inputs[k]; 1]`.
    pub fn fit(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidArgument(
                "projection needs matching, non-empty inputs and targets".into(),
            ));
        }
        let p = inputs[0].len() + 1;
        let d = targets[0].len();
        let x = nalgebra::DMatrix::from_fn(inputs.len(), p, |r, c| {
            if c + 1 == p {
                1.0
            } else {
                inputs[r][c]
            }
        });
        let y = nalgebra::DMatrix::from_fn(targets.len(), d, |r, c| targets[r][c]);
        let svd = x.svd(true, true);
        let w = svd
            .solve(&y, 1e-10)
            .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
        let weights = (0..d).map(|k| (0..p).map(|j| w[(j, k)]).collect()).collect();
        Ok(UserProjection::Linear { weights })
    }

    pub fn apply(&self, user: &[f64]) -> Vec<f64> {
        match self {
            UserProjection::Identity => user.to_vec(),
            UserProjection::Linear { weights } => weights
                .iter()
                .map(|row| {
                    let (w, b) = row.split_at(row.len() - 1);
                    dot(w, user) + b[0]
                })
                .collect(),
        }
    }
}

/// Greedy ranking against an arbitrary item table, e.g. learned embeddings.
///
/// With the true catalog and the identity projection this is the greedy oracle.
#[derive(Debug, Clone)]
pub struct EmbeddingGreedy {
    items: Vec<Vec<f64>>,
    projection: UserProjection,
}

impl EmbeddingGreedy {
    pub fn new(items: Vec<Vec<f64>>, projection: UserProjection) -> Self {
        EmbeddingGreedy { items, projection }
    }

    pub fn scores(&self, user: &[f64]) -> Vec<f64> {
        let u = self.projection.apply(user);
        self.items.iter().map(|v| dot(v, &u)).collect()
    }
}

impl Policy for EmbeddingGreedy {
    fn name(&self) -> &str {
        "embedding-greedy"
    }

    fn select(&self, env: &Simulator, _obs: &Observation, _rng: &mut SimRng) -> Vec<usize> {
        let user = env.oracle_user_embedding();
        rank_by_scores(&self.scores(user.as_slice()), env.config().slate_size, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn ranking_breaks_ties_by_id() {
        let scores = [0.2, 0.5, 0.5, 0.1, 0.5];
        assert_eq!(rank_by_scores(&scores, 3, true), vec![1, 2, 4]);
        assert_eq!(rank_by_scores(&scores, 2, false), vec![3, 0]);
        assert_eq!(rank_by_scores(&[0.0; 6], 4, true), vec![0, 1, 2, 3]);
    }

    #[test]
    fn churned_user_gets_first_ids() {
        let catalog: Vec<Embedding> = (0..20)
            .map(|i| {
                let mut v = vec![0.0; 4];
                v[i % 4] = 1.0;
                Embedding::new(v)
            })
            .collect();
        let slate = greedy_oracle_slate(&Embedding::zeros(4), &catalog, 5);
        assert_eq!(slate, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn degenerate_mixtures() {
        let catalog: Vec<Embedding> = (0..30)
            .map(|i| Embedding::new(vec![(i as f64).cos().abs(), (i as f64).sin().abs()]))
            .collect();
        let user = Embedding::new(vec![0.6, 0.8]);
        let mut rng = seeded(3);
        let greedy = greedy_oracle_slate(&user, &catalog, 10);
        assert_eq!(mixture_logging_slate(&user, &catalog, 10, 1.0, &mut rng), greedy);
        for _ in 0..200 {
            let mut s = mixture_logging_slate(&user, &catalog, 10, 0.0, &mut rng);
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 10);
        }
    }

    #[test]
    fn projection_recovers_affine_map() {
        let inputs: Vec<Vec<f64>> = (0..40)
            .map(|k| vec![(k as f64 * 0.37).sin(), (k as f64 * 0.11).cos(), k as f64 / 40.0])
            .collect();
        let targets: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| vec![2.0 * x[0] - x[2] + 0.5, x[1] + 3.0 * x[2]])
            .collect();
        let p = UserProjection::fit(&inputs, &targets).unwrap();
        let out = p.apply(&[0.1, 0.2, 0.3]);
        assert!((out[0] - 0.4).abs() < 1e-9);
        assert!((out[1] - 1.1).abs() < 1e-9);
    }
}
