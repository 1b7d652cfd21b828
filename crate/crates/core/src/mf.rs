//! Logistic matrix factorization on logged impressions.
//!
//! Every session is its own user. Each impression is one example with
//! `P(click) = sigmoid(u . v + b_user + b_item + b)`, fitted by SGD.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::InteractionLog;
use crate::policies::{EmbeddingGreedy, UserProjection};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Per-example gradient norm cap.
    pub clip_norm: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            dim: 10,
            epochs: 30,
            learning_rate: 0.05,
            l2: 1e-4,
            clip_norm: 10.0,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub config: MfConfig,
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub global_bias: f64,
    pub item_seen: Vec<bool>,
    /// Mean training log-loss before training and after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// `(user, item, clicked)` triples.
pub type Example = (usize, usize, bool);

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl MfModel {
    pub fn logit(&self, user: usize, item: usize) -> f64 {
        let dot: f64 = self.user_factors[user]
            .iter()
            .zip(&self.item_factors[item])
            .map(|(a, b)| a * b)
            .sum();
        dot + self.user_bias[user] + self.item_bias[item] + self.global_bias
    }

    pub fn predict(&self, user: usize, item: usize) -> f64 {
        sigmoid(self.logit(user, item))
    }

    pub fn log_loss(&self, examples: &[Example]) -> f64 {
        let eps = 1e-12;
        examples
            .iter()
            .map(|&(u, i, c)| {
                let p = self.predict(u, i).clamp(eps, 1.0 - eps);
                if c {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / examples.len().max(1) as f64
    }
}

/// One example per logged impression; users are session ids.
pub fn log_examples(log: &InteractionLog) -> Vec<Example> {
    log.rows
        .iter()
        .flat_map(|r| r.slate.iter().zip(&r.clicks).map(move |(&i, &c)| (r.session, i, c)))
        .collect()
}

pub fn fit_mf(log: &InteractionLog, config: &MfConfig) -> Result<MfModel> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let n_users = log.rows.iter().map(|r| r.session).max().unwrap_or(0) + 1;
    fit_examples(&log_examples(log), n_users, log.header.n_items, config)
}

/// SGD over explicit examples; deterministic in `config.seed`.
pub fn fit_examples(
    examples: &[Example],
    n_users: usize,
    n_items: usize,
    config: &MfConfig,
) -> Result<MfModel> {
    if config.dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
    }
    if examples.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut rng = seeded(config.seed);
    let mut init = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..config.dim)
                    .map(|_| config.init_scale * (2.0 * rng.gen::<f64>() - 1.0))
                    .collect()
            })
            .collect()
    };
    let user_factors = init(n_users);
    let item_factors = init(n_items);
    let mut item_seen = vec![false; n_items];
    for &(_, i, _) in examples {
        item_seen[i] = true;
    }
    let mut model = MfModel {
        config: config.clone(),
        user_factors,
        item_factors,
        user_bias: vec![0.0; n_users],
        item_bias: vec![0.0; n_items],
        global_bias: 0.0,
        item_seen,
        epoch_losses: Vec::with_capacity(config.epochs + 1),
    };
    model.epoch_losses.push(model.log_loss(examples));

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let (lr, l2) = (config.learning_rate, config.l2);
    let mut gu = vec![0.0; config.dim];
    let mut gv = vec![0.0; config.dim];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let (u, i, c) = examples[k];
            // Descent direction of the log-loss with respect to the logit.
            let err = f64::from(u8::from(c)) - model.predict(u, i);
            for j in 0..config.dim {
                let (pu, qi) = (model.user_factors[u][j], model.item_factors[i][j]);
                gu[j] = err * qi - l2 * pu;
                gv[j] = err * pu - l2 * qi;
            }
            let gbu = err - l2 * model.user_bias[u];
            let gbi = err - l2 * model.item_bias[i];
            let norm = (gu.iter().chain(&gv).map(|g| g * g).sum::<f64>()
                + gbu * gbu
                + gbi * gbi
                + err * err)
                .sqrt();
            let scale = if norm > config.clip_norm { config.clip_norm / norm } else { 1.0 };
            let step = lr * scale;
            for j in 0..config.dim {
                model.user_factors[u][j] += step * gu[j];
                model.item_factors[i][j] += step * gv[j];
            }
            model.user_bias[u] += step * gbu;
            model.item_bias[i] += step * gbi;
            model.global_bias += step * err;
        }
        model.epoch_losses.push(model.log_loss(examples));
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemEmbeddingRow {
    pub item: usize,
    pub vector: Vec<f64>,
    /// False for items absent from the training log; their vector is zero.
    pub seen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemEmbeddingTable {
    pub dim: usize,
    pub rows: Vec<ItemEmbeddingRow>,
}

impl ItemEmbeddingTable {
    /// Vectors indexed by item id.
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        let n = self.rows.iter().map(|r| r.item + 1).max().unwrap_or(0);
        let mut out = vec![vec![0.0; self.dim]; n];
        for r in &self.rows {
            out[r.item].clone_from(&r.vector);
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io("<embeddings>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut rows: Vec<ItemEmbeddingRow> = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<embeddings>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: ItemEmbeddingRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            if rows.first().is_some_and(|f| f.vector.len() != row.vector.len()) {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "inconsistent embedding dimension".into(),
                });
            }
            rows.push(row);
        }
        let dim = rows.first().map_or(0, |r| r.vector.len());
        Ok(ItemEmbeddingTable { dim, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(file))
    }
}

pub fn export_item_embeddings(model: &MfModel) -> ItemEmbeddingTable {
    let rows = model
        .item_factors
        .iter()
        .zip(&model.item_seen)
        .enumerate()
        .map(|(item, (v, &seen))| ItemEmbeddingRow {
            item,
            vector: if seen { v.clone() } else { vec![0.0; v.len()] },
            seen,
        })
        .collect();
    ItemEmbeddingTable {
        dim: model.config.dim,
        rows,
    }
}

/// Least-squares map from each session's first logged user embedding to that
/// session's learned user vector.
pub fn fit_user_projection(model: &MfModel, log: &InteractionLog, n_topics: usize) -> Result<UserProjection> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut last = None;
    for row in &log.rows {
        if last == Some(row.session) {
            continue;
        }
        last = Some(row.session);
        inputs.push(row.observation[..n_topics].to_vec());
        targets.push(model.user_factors[row.session].clone());
    }
    UserProjection::fit(&inputs, &targets)
}

/// Greedy policy over learned item vectors; the true user embedding is mapped
/// into the latent space by [`fit_user_projection`].
pub fn greedy_over_learned(
    table: &ItemEmbeddingTable,
    model: &MfModel,
    log: &InteractionLog,
    n_topics: usize,
) -> Result<EmbeddingGreedy> {
    let projection = fit_user_projection(model, log, n_topics)?;
    Ok(EmbeddingGreedy::new(table.vectors(), projection))
}

/// Sidecar file holding the user projection that goes with a table.
pub fn projection_path(table: &Path) -> PathBuf {
    table.with_extension("projection.json")
}

/// Writes the table to `path` and its projection next to it.
pub fn save_learned(table: &ItemEmbeddingTable, projection: &UserProjection, path: &Path) -> Result<()> {
    table.save(path)?;
    let side = projection_path(path);
    let text = serde_json::to_string_pretty(projection)?;
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Loads a table for a catalog of `n_items` items. Without a projection
/// sidecar the table must live in the topic space (`dim == n_topics`) and
/// the user embedding is used as is.
pub fn load_learned_greedy(path: &Path, n_items: usize, n_topics: usize) -> Result<EmbeddingGreedy> {
    let table = ItemEmbeddingTable::load(path)?;
    let vectors = table.vectors();
    if vectors.len() != n_items || table.rows.len() != n_items {
        return Err(Error::InvalidArgument(format!(
            "embedding table has {} rows, catalog has {n_items} items",
            table.rows.len()
        )));
    }
    let side = projection_path(path);
    let projection = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: 0, message: e.to_string() })?
    } else if table.dim == n_topics {
        UserProjection::Identity
    } else {
        return Err(Error::InvalidArgument(format!(
            "no projection next to the table and its dimension {} differs from {n_topics} topics",
            table.dim
        )));
    };
    Ok(EmbeddingGreedy::new(vectors, projection))
}
