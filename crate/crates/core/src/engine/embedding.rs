//! Sparse unit-norm topic embeddings for items and users.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::TopicPrior;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

use super::SimulatorConfig;

pub const ITEM_TOPIC_COUNTS: [usize; 2] = [2, 3];
pub const USER_TOPIC_COUNTS: [usize; 3] = [3, 4, 5];

/// Non-negative topic-space vector shared by items and users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(components: Vec<f64>) -> Self {
        Embedding(components)
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding(vec![0.0; dim])
    }

    /// Unit vector on `support`, with uniform magnitudes before normalization.
    pub fn random_on_support<R: Rng + ?Sized>(dim: usize, support: &[usize], rng: &mut R) -> Self {
        // Draw every component first, then zero out the rest: keeps the
        // rng consumption identical regardless of the support.
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let mut keep = vec![false; dim];
        for &t in support {
            keep[t] = true;
        }
        for (x, k) in v.iter_mut().zip(&keep) {
            if !k {
                *x = 0.0;
            }
        }
        let mut e = Embedding(v);
        e.normalize();
        e
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Scales to unit norm; the zero vector is left untouched.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|x| *x /= n);
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|&&x| x > 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of the dominant component; lowest index wins ties.
    pub fn main_topic(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.0.iter().enumerate() {
            if x > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inner product of item and user embeddings.
pub fn relevance(item: &Embedding, user: &Embedding) -> Result<f64> {
    if item.dim() != user.dim() {
        return Err(Error::LengthMismatch {
            expected: item.dim(),
            actual: user.dim(),
        });
    }
    Ok(dot(item.as_slice(), user.as_slice()))
}

/// Draws one item: uniform components, 2 or 3 topics, zero the rest, normalize.
pub fn sample_item<R: Rng + ?Sized>(n_topics: usize, rng: &mut R) -> Embedding {
    let mut v: Vec<f64> = (0..n_topics).map(|_| rng.gen::<f64>()).collect();
    let k = ITEM_TOPIC_COUNTS[rng.gen_range(0..ITEM_TOPIC_COUNTS.len())].min(n_topics);
    let chosen = index::sample(rng, n_topics, k);
    let mut keep = vec![false; n_topics];
    for t in chosen.iter() {
        keep[t] = true;
    }
    for (x, k) in v.iter_mut().zip(&keep) {
        if !k {
            *x = 0.0;
        }
    }
    let mut e = Embedding(v);
    e.normalize();
    e
}

/// Item catalog, deterministic in `seed` (used as the catalog stream seed).
pub fn generate_catalog(config: &SimulatorConfig, seed: u64) -> Result<Vec<Embedding>> {
    config.validate()?;
    let mut rng = stream_rng(seed, Stream::Catalog);
    Ok((0..config.n_items)
        .map(|_| sample_item(config.n_topics, &mut rng))
        .collect())
}

/// Draws a user covering 3 to 5 topics. Topics are uniform without a prior
/// and drawn successively (without replacement) from the prior otherwise.
pub fn sample_user<R: Rng + ?Sized>(
    config: &SimulatorConfig,
    rng: &mut R,
    prior: Option<&TopicPrior>,
) -> Result<Embedding> {
    let n = config.n_topics;
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let wanted = USER_TOPIC_COUNTS[rng.gen_range(0..USER_TOPIC_COUNTS.len())];
    let chosen: Vec<usize> = match prior {
        None => index::sample(rng, n, wanted.min(n)).into_vec(),
        Some(p) => {
            let probs = p.probabilities();
            if probs.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: probs.len(),
                });
            }
            let positive = probs.iter().filter(|&&x| x > 0.0).count();
            let minimum = USER_TOPIC_COUNTS[0];
            if positive < minimum {
                return Err(Error::InvalidPrior(format!(
                    "{positive} topics with positive mass, need at least {minimum}"
                )));
            }
            draw_without_replacement(probs, wanted.min(positive), rng)
        }
    };
    let mut keep = vec![false; n];
    for t in chosen {
        keep[t] = true;
    }
    for (x, k) in v.iter_mut().zip(&keep) {
        if !k {
            *x = 0.0;
        }
    }
    let mut e = Embedding(v);
    e.normalize();
    Ok(e)
}

fn draw_without_replacement<R: Rng + ?Sized>(weights: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = w.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, &wi) in w.iter().enumerate() {
            if wi <= 0.0 {
                continue;
            }
            pick = Some(i);
            if u < wi {
                break;
            }
            u -= wi;
        }
        // Rounding can leave `u` past the last bucket; fall back to the
        // last positive entry.
        let i = pick.expect("positive mass remains");
        out.push(i);
        w[i] = 0.0;
    }
    out
}
