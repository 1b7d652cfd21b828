//! Click models fitted on interaction logs: per-item CTR and a position-based
//! model, plus propensity diagnostics and model-driven reranking.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Observation, Simulator};
use crate::error::{Error, Result};
use crate::log::InteractionLog;
use crate::policies::{rank_by_scores, Policy};
use crate::rng::{seeded, SimRng};

const PROB_FLOOR: f64 = 1e-12;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-item click and impression counts, ignoring rank and state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DctrParams {
    pub clicks: Vec<usize>,
    pub impressions: Vec<usize>,
}

impl DctrParams {
    pub fn ctr(&self, item: usize) -> Option<f64> {
        (self.impressions[item] > 0).then(|| self.clicks[item] as f64 / self.impressions[item] as f64)
    }

    /// CTR per item; never-shown items score 0.
    pub fn scores(&self) -> Vec<f64> {
        (0..self.clicks.len()).map(|i| self.ctr(i).unwrap_or(0.0)).collect()
    }

    pub fn unseen_items(&self) -> Vec<usize> {
        (0..self.impressions.len()).filter(|&i| self.impressions[i] == 0).collect()
    }
}

pub fn fit_dctr(log: &InteractionLog) -> Result<DctrParams> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let n = log.header.n_items;
    let mut p = DctrParams {
        clicks: vec![0; n],
        impressions: vec![0; n],
    };
    for row in &log.rows {
        for (&i, &c) in row.slate.iter().zip(&row.clicks) {
            p.impressions[i] += 1;
            p.clicks[i] += usize::from(c);
        }
    }
    Ok(p)
}

/// Position-based model: `P(click) = sigmoid(w_i . x + b_i) * sigmoid(theta_r)`.
///
/// Raw examination parameters are unconstrained; compare them only through
/// [`normalized_propensities`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbmParams {
    pub exam_logits: Vec<f64>,
    /// One row per item: feature weights followed by the bias.
    pub heads: Vec<Vec<f64>>,
}

impl PbmParams {
    pub fn examinations(&self) -> Vec<f64> {
        self.exam_logits.iter().map(|&t| sigmoid(t)).collect()
    }

    pub fn relevance(&self, item: usize, obs: &[f64]) -> f64 {
        let h = &self.heads[item];
        let (w, b) = h.split_at(h.len() - 1);
        sigmoid(w.iter().zip(obs).map(|(a, x)| a * x).sum::<f64>() + b[0])
    }

    /// Click probability at 1-based `rank`.
    pub fn click_probability(&self, item: usize, rank: usize, obs: &[f64]) -> f64 {
        self.relevance(item, obs) * sigmoid(self.exam_logits[rank - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbmFitConfig {
    pub max_iters: usize,
    /// Stop once an iteration raises the mean log-likelihood by less than this.
    pub tolerance: f64,
    pub init_seed: u64,
    pub initial_step: f64,
}

impl Default for PbmFitConfig {
    fn default() -> Self {
        PbmFitConfig {
            max_iters: 5000,
            tolerance: 1e-6,
            init_seed: 0,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PbmFit {
    pub params: PbmParams,
    /// Mean log-likelihood before the first and after every iteration.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Impressions flattened out of a log; observations are stored once per row.
struct Data {
    d: usize,
    obs: Vec<f64>,
    row: Vec<usize>,
    item: Vec<usize>,
    rank: Vec<usize>,
    click: Vec<bool>,
    n: f64,
}

/// Gradient and diagonal Fisher information of the mean log-likelihood.
struct Curvature<T> {
    grad: T,
    fisher: T,
}

impl Data {
    fn new(log: &InteractionLog) -> Self {
        let d = log.header.observation_len;
        let mut data = Data {
            d,
            obs: Vec::with_capacity(log.len() * d),
            row: Vec::new(),
            item: Vec::new(),
            rank: Vec::new(),
            click: Vec::new(),
            n: 0.0,
        };
        for (k, row) in log.rows.iter().enumerate() {
            data.obs.extend_from_slice(&row.observation);
            for ((&i, &r), &c) in row.slate.iter().zip(&row.ranks).zip(&row.clicks) {
                data.row.push(k);
                data.item.push(i);
                data.rank.push(r - 1);
                data.click.push(c);
            }
        }
        data.n = data.click.len() as f64;
        data
    }

    fn x(&self, k: usize) -> &[f64] {
        let r = self.row[k];
        &self.obs[r * self.d..(r + 1) * self.d]
    }

    fn relevances(&self, p: &PbmParams) -> Vec<f64> {
        (0..self.click.len())
            .map(|k| p.relevance(self.item[k], self.x(k)))
            .collect()
    }

    fn prob(&self, k: usize, rel: &[f64], exam: &[f64]) -> f64 {
        (rel[k] * exam[self.rank[k]]).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    fn mean_ll(&self, rel: &[f64], exam: &[f64]) -> f64 {
        (0..self.click.len())
            .map(|k| {
                let p = self.prob(k, rel, exam);
                if self.click[k] {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / self.n
    }

    /// `d LL / d p` and the Fisher weight `1 / (p (1 - p))` of example `k`.
    fn score(&self, k: usize, rel: &[f64], exam: &[f64]) -> (f64, f64) {
        let p = self.prob(k, rel, exam);
        let dp = if self.click[k] { 1.0 / p } else { -1.0 / (1.0 - p) };
        (dp, 1.0 / (p * (1.0 - p)))
    }

    fn heads(&self, p: &PbmParams, rel: &[f64], exam: &[f64]) -> Curvature<Vec<Vec<f64>>> {
        let zeros: Vec<Vec<f64>> = p.heads.iter().map(|h| vec![0.0; h.len()]).collect();
        let (mut grad, mut fisher) = (zeros.clone(), zeros);
        for k in 0..self.click.len() {
            let (dp, w) = self.score(k, rel, exam);
            let a = rel[k];
            let dpa = exam[self.rank[k]] * a * (1.0 - a);
            let (g, f) = (dp * dpa / self.n, w * dpa * dpa / self.n);
            let i = self.item[k];
            let (gi, fi) = (&mut grad[i], &mut fisher[i]);
            for (j, &xj) in self.x(k).iter().enumerate() {
                gi[j] += g * xj;
                fi[j] += f * xj * xj;
            }
            let last = gi.len() - 1;
            gi[last] += g;
            fi[last] += f;
        }
        Curvature { grad, fisher }
    }

    fn exams(&self, rel: &[f64], exam: &[f64]) -> Curvature<Vec<f64>> {
        let mut grad = vec![0.0; exam.len()];
        let mut fisher = vec![0.0; exam.len()];
        for k in 0..self.click.len() {
            let (dp, w) = self.score(k, rel, exam);
            let r = self.rank[k];
            let dpt = rel[k] * exam[r] * (1.0 - exam[r]);
            grad[r] += dp * dpt / self.n;
            fisher[r] += w * dpt * dpt / self.n;
        }
        Curvature { grad, fisher }
    }
}

/// Damping added to the Fisher diagonal before dividing.
const FISHER_DAMPING: f64 = 1e-8;

fn preconditioned(g: f64, f: f64) -> f64 {
    g / (f + FISHER_DAMPING)
}

/// Maximum-likelihood PBM by alternating full-batch ascent on the relevance
/// heads and the examination logits. Each block steps along its gradient
/// scaled by the inverse diagonal Fisher information; the step multiplier
/// is halved until the likelihood does not decrease and grown after an
/// accepted step, so the likelihood never decreases.
pub fn fit_pbm(log: &InteractionLog, config: &PbmFitConfig) -> Result<PbmFit> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let s = log.header.slate_size;
    if s < 2 {
        return Err(Error::InvalidArgument("position-based model needs slates of 2 or more".into()));
    }
    let total = log.len() * s;
    let clicks = log.n_clicks();
    if clicks == 0 || clicks == total {
        return Err(Error::NonIdentifiable(format!("{clicks} clicks out of {total} impressions")));
    }
    let d = log.header.observation_len + 1;
    let mut rng = seeded(config.init_seed);
    let mut params = PbmParams {
        exam_logits: vec![0.0; s],
        heads: (0..log.header.n_items)
            .map(|_| (0..d).map(|_| 0.01 * (2.0 * rng.gen::<f64>() - 1.0)).collect())
            .collect(),
    };
    let data = Data::new(log);

    let mut rel = data.relevances(&params);
    let mut exam = params.examinations();
    let mut ll = data.mean_ll(&rel, &exam);
    let mut history = vec![ll];
    let (mut head_step, mut exam_step) = (config.initial_step, config.initial_step);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let start = ll;

        let c = data.heads(&params, &rel, &exam);
        while head_step > 1e-12 {
            let mut trial = params.clone();
            for ((h, g), f) in trial.heads.iter_mut().zip(&c.grad).zip(&c.fisher) {
                for ((w, &gj), &fj) in h.iter_mut().zip(g).zip(f) {
                    *w += head_step * preconditioned(gj, fj);
                }
            }
            let trial_rel = data.relevances(&trial);
            let trial_ll = data.mean_ll(&trial_rel, &exam);
            if trial_ll >= ll {
                params = trial;
                rel = trial_rel;
                ll = trial_ll;
                head_step = (head_step * 1.5).min(1.0);
                break;
            }
            head_step *= 0.5;
        }

        let c = data.exams(&rel, &exam);
        while exam_step > 1e-12 {
            let logits: Vec<f64> = params
                .exam_logits
                .iter()
                .zip(c.grad.iter().zip(&c.fisher))
                .map(|(t, (&g, &f))| t + exam_step * preconditioned(g, f))
                .collect();
            let trial_exam: Vec<f64> = logits.iter().map(|&t| sigmoid(t)).collect();
            let trial_ll = data.mean_ll(&rel, &trial_exam);
            if trial_ll >= ll {
                params.exam_logits = logits;
                exam = trial_exam;
                ll = trial_ll;
                exam_step = (exam_step * 1.5).min(1.0);
                break;
            }
            exam_step *= 0.5;
        }

        history.push(ll);
        if ll - start < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(PbmFit {
        params,
        log_likelihoods: history,
        iterations,
        converged,
    })
}

/// Divides by the rank-1 entry.
pub fn normalized_propensities(examinations: &[f64]) -> Result<Vec<f64>> {
    match examinations.first() {
        Some(&e) if e > 0.0 => Ok(examinations.iter().map(|x| x / e).collect()),
        Some(_) => Err(Error::ZeroLeadingExamination),
        None => Err(Error::InvalidArgument("empty examination vector".into())),
    }
}

pub fn propensity_mse(learned: &[f64], truth: &[f64]) -> Result<f64> {
    if learned.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: learned.len(),
        });
    }
    if learned.is_empty() {
        return Err(Error::InvalidArgument("empty propensity vectors".into()));
    }
    Ok(learned
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / learned.len() as f64)
}

/// Kendall rank correlation (tau-b, tie-corrected) between two score vectors.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].total_cmp(&a[j]) as i64;
            let db = b[i].total_cmp(&b[j]) as i64;
            match (da, db) {
                (0, 0) => {}
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + ties_a) * (concordant + discordant + ties_b)) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ClickModel {
    Dctr(DctrParams),
    Pbm(PbmParams),
}

impl ClickModel {
    /// Relevance of every item for a full-state observation.
    pub fn relevance_scores(&self, obs: &[f64]) -> Vec<f64> {
        match self {
            ClickModel::Dctr(p) => p.scores(),
            ClickModel::Pbm(p) => (0..p.heads.len()).map(|i| p.relevance(i, obs)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `items` by decreasing model relevance, ties by ascending id.
pub fn rerank_by_model(model: &ClickModel, obs: &[f64], items: &[usize]) -> Vec<usize> {
    let scores = model.relevance_scores(obs);
    let mut out = items.to_vec();
    out.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    out
}

/// Deploys a click model: ranks the whole catalog against the full-state
/// observation and shows the top of it.
#[derive(Debug, Clone)]
pub struct ModelRanker {
    pub model: ClickModel,
}

impl Policy for ModelRanker {
    fn name(&self) -> &str {
        match self.model {
            ClickModel::Dctr(_) => "dctr",
            ClickModel::Pbm(_) => "pbm",
        }
    }

    fn select(&self, env: &Simulator, _obs: &Observation, _rng: &mut SimRng) -> Vec<usize> {
        let obs = env.full_observation();
        let scores = self.model.relevance_scores(obs.as_slice());
        rank_by_scores(&scores, env.config().slate_size, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::{LogHeader, LogRow};
    use approx::assert_abs_diff_eq;

    fn log_from(rows: Vec<(Vec<usize>, Vec<bool>)>, n_items: usize) -> InteractionLog {
        let s = rows[0].0.len();
        InteractionLog {
            header: LogHeader {
                env: "toy".into(),
                seed: 0,
                policy: "fixed".into(),
                n_sessions: 1,
                n_items,
                slate_size: s,
                observation_len: 1,
            },
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(k, (slate, clicks))| LogRow {
                    session: 0,
                    step: k + 1,
                    observation: vec![0.0],
                    slate,
                    ranks: (1..=s).collect(),
                    clicks,
                })
                .collect(),
        }
    }

    #[test]
    fn dctr_is_click_ratio() {
        let mut rows = Vec::new();
        for k in 0..10 {
            rows.push((vec![0, 1], vec![k < 3, false]));
        }
        let p = fit_dctr(&log_from(rows, 3)).unwrap();
        assert_abs_diff_eq!(p.ctr(0).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(p.ctr(2), None);
        assert_eq!(p.unseen_items(), vec![2]);
        assert_eq!(p.scores()[2], 0.0);
    }

    #[test]
    fn propensity_helpers() {
        assert_eq!(normalized_propensities(&[0.8, 0.4]).unwrap(), vec![1.0, 0.5]);
        let truth: Vec<f64> = (0..10).map(|r| 0.85f64.powi(r)).collect();
        assert_eq!(normalized_propensities(&truth).unwrap(), truth);
        assert!(matches!(normalized_propensities(&[0.0, 0.3]), Err(Error::ZeroLeadingExamination)));
        assert_abs_diff_eq!(propensity_mse(&[1.0, 0.5], &[1.0, 0.9]).unwrap(), 0.08, epsilon = 1e-15);
        assert_eq!(propensity_mse(&truth, &truth).unwrap(), 0.0);
        assert!(propensity_mse(&[1.0], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn kendall_tau_extremes() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
    }

    #[test]
    fn degenerate_logs_are_not_identifiable() {
        let none = log_from(vec![(vec![0, 1], vec![false, false]); 5], 2);
        let all = log_from(vec![(vec![0, 1], vec![true, true]); 5], 2);
        for log in [none, all] {
            assert!(matches!(
                fit_pbm(&log, &PbmFitConfig::default()),
                Err(Error::NonIdentifiable(_))
            ));
        }
    }

    #[test]
    fn rank_one_only_clicks_kill_lower_examination() {
        let rows = (0..200)
            .map(|k| (if k % 2 == 0 { vec![0, 1] } else { vec![1, 0] }, vec![k % 4 < 2, false]))
            .collect();
        let fit = fit_pbm(&log_from(rows, 2), &PbmFitConfig::default()).unwrap();
        let norm = normalized_propensities(&fit.params.examinations()).unwrap();
        assert!(norm[1] < 0.01, "{norm:?}");
    }

    #[test]
    fn rerank_ties_fall_back_to_ids() {
        let model = ClickModel::Dctr(DctrParams {
            clicks: vec![1; 4],
            impressions: vec![2; 4],
        });
        assert_eq!(rerank_by_model(&model, &[], &[3, 1, 2, 0]), vec![0, 1, 2, 3]);
        let back = ClickModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
    }
}
