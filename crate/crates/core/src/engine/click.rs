//! Position-based click model: attractiveness times rank examination.

use rand::Rng;

use crate::error::{Error, Result};

use super::embedding::{dot, Embedding};
use super::state::SessionState;
use super::SimulatorConfig;

/// Sigmoid argument bound; beyond it the result is 0 or 1 at double precision anyway.
const EXP_CLAMP: f64 = 500.0;

pub fn attractiveness(rel: f64, lambda_scale: f64, mu_shift: f64, alpha_range: f64) -> f64 {
    let z = (-lambda_scale * (rel - mu_shift)).clamp(-EXP_CLAMP, EXP_CLAMP);
    alpha_range / (1.0 + z.exp())
}

/// Probability of examining rank `rank` (1-based).
pub fn examination(rank: usize, epsilon_decay: f64, slate_size: usize) -> Result<f64> {
    if rank == 0 || rank > slate_size {
        return Err(Error::RankOutOfRange { rank, slate_size });
    }
    Ok(epsilon_decay.powi(rank as i32 - 1))
}

pub(crate) fn check_slate(slate: &[usize], config: &SimulatorConfig) -> Result<()> {
    if slate.len() != config.slate_size {
        return Err(Error::MalformedSlate(format!(
            "expected {} items, got {}",
            config.slate_size,
            slate.len()
        )));
    }
    let mut seen = vec![false; config.n_items];
    for &i in slate {
        if i >= config.n_items {
            return Err(Error::MalformedSlate(format!(
                "item {i} outside catalog of {}",
                config.n_items
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::MalformedSlate(format!("duplicate item {i}")));
        }
    }
    Ok(())
}

/// Relevance scores of the slate items against `user`.
pub fn slate_relevances(user: &[f64], slate: &[usize], catalog: &[Embedding]) -> Vec<f64> {
    slate
        .iter()
        .map(|&i| dot(catalog[i].as_slice(), user))
        .collect()
}

/// Per-rank click probabilities `A(u, i) * E_r` for the given relevance scores.
pub fn click_probabilities(scores: &[f64], config: &SimulatorConfig) -> Vec<f64> {
    let mut exam = 1.0;
    scores
        .iter()
        .map(|&rel| {
            let p = attractiveness(rel, config.lambda_scale, config.mu_shift, config.alpha_range)
                * exam;
            exam *= config.epsilon_decay;
            p
        })
        .collect()
}

/// Independent Bernoulli draw per rank, one uniform per slot.
pub fn sample_clicks<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Vec<bool> {
    probabilities
        .iter()
        .map(|&p| rng.gen::<f64>() < p)
        .collect()
}

/// Samples clicks on `slate` against the effective (boredom-masked) user embedding.
pub fn sample_slate_clicks<R: Rng + ?Sized>(
    state: &SessionState,
    slate: &[usize],
    catalog: &[Embedding],
    config: &SimulatorConfig,
    rng: &mut R,
) -> Result<Vec<bool>> {
    check_slate(slate, config)?;
    let user = state.effective_embedding(config);
    let scores = slate_relevances(user.as_slice(), slate, catalog);
    Ok(sample_clicks(&click_probabilities(&scores, config), rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn attractiveness_examples() {
        assert_abs_diff_eq!(attractiveness(0.65, 100.0, 0.65, 1.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(attractiveness(0.30, 5.0, 0.30, 1.0), 0.5, epsilon = 1e-15);
        // 1 / (1 + e^-10)
        assert_abs_diff_eq!(attractiveness(0.75, 100.0, 0.65, 1.0), 0.9999546, epsilon = 1e-6);
        assert!(attractiveness(0.0, 100.0, 0.65, 1.0) < 1e-28);
    }

    #[test]
    fn attractiveness_saturates_without_overflow() {
        let low = attractiveness(-1e6, 100.0, 0.65, 1.0);
        assert!((0.0..1e-200).contains(&low));
        assert_eq!(attractiveness(1e6, 100.0, 0.65, 0.7), 0.7);
        assert!(attractiveness(f64::MAX, 1e300, 0.0, 1.0).is_finite());
    }

    #[test]
    fn examination_examples() {
        assert_eq!(examination(1, 0.85, 10).unwrap(), 1.0);
        assert_eq!(examination(2, 0.85, 10).unwrap(), 0.85);
        assert_abs_diff_eq!(examination(3, 0.85, 10).unwrap(), 0.7225, epsilon = 1e-12);
        assert!(matches!(examination(0, 0.85, 10), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(examination(11, 0.85, 10), Err(Error::RankOutOfRange { .. })));
    }
}
