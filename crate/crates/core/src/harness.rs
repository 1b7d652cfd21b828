//! Training/validation loops, seeded aggregation, sweeps and benchmarks.
//!
//! Seeds:
//! - run seed `s` fixes the catalog (`master_seed = s`);
//! - training episode `e` resets with `derive_seed(s, "train", e)`;
//! - checkpoint `k` validates on users from `derive_seed(s, "validation", k)`,
//!   so validation users never coincide with training users.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::{Simulator, StepInfo};
use crate::envs::{builtin, CatalogSource, EnvSpec};
use crate::error::{Error, Result};
use crate::mf::load_learned_greedy;
use crate::policies::{make_policy, LinearSoftmaxPolicy, Policy, RandomPolicy, ReinforceConfig};
use crate::rng::{derive_seed, seeded, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    pub policy: String,
    #[serde(default)]
    pub reinforce: Option<ReinforceConfig>,
    /// Learned item table; turns `greedy` into greedy over learned vectors.
    #[serde(default)]
    pub item_embeddings: Option<PathBuf>,
    pub n_training_steps: usize,
    pub validation_every: usize,
    pub n_validation_episodes: usize,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    /// 100k training steps, a checkpoint every 10k, 25 validation episodes, 3 seeds.
    pub fn desk(env: &str, policy: &str) -> Self {
        ExperimentConfig {
            env: env.to_string(),
            lambda: None,
            omega: None,
            catalog: None,
            policy: policy.to_string(),
            reinforce: None,
            item_embeddings: None,
            n_training_steps: 100_000,
            validation_every: 10_000,
            n_validation_episodes: 25,
            seeds: vec![0, 1, 2],
        }
    }

    /// 500k training steps, a checkpoint every 50k, 25 validation episodes, 5 seeds.
    pub fn full_scale(env: &str, policy: &str) -> Self {
        ExperimentConfig {
            n_training_steps: 500_000,
            validation_every: 50_000,
            seeds: (0..5).collect(),
            ..Self::desk(env, policy)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.validation_every == 0 || self.n_validation_episodes == 0 || self.seeds.is_empty() {
            return Err(Error::InvalidConfig(
                "validation_every, n_validation_episodes and seeds must be positive".into(),
            ));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        self.env_spec(0)?.config.validate()
    }

    pub fn env_spec(&self, seed: u64) -> Result<EnvSpec> {
        let mut spec = builtin(&self.env, self.lambda)?.with_seed(seed);
        if let Some(w) = self.omega {
            spec = spec.with_omega(w)?;
        }
        if let Some(path) = &self.catalog {
            spec.catalog_source = CatalogSource::File(path.clone());
        }
        Ok(spec)
    }

    pub fn n_checkpoints(&self) -> usize {
        self.n_training_steps / self.validation_every + 1
    }

    fn build_policy(&self, env: &Simulator, seed: u64) -> Result<Box<dyn Policy>> {
        if let Some(path) = &self.item_embeddings {
            if self.policy != "greedy" {
                return Err(Error::InvalidConfig("item embeddings only apply to the greedy policy".into()));
            }
            let cfg = env.config();
            return Ok(Box::new(load_learned_greedy(path, cfg.n_items, cfg.n_topics)?));
        }
        if self.policy == "reinforce" {
            let cfg = self.reinforce.clone().unwrap_or_else(|| ReinforceConfig::for_env(env.config()));
            let cfg = ReinforceConfig { init_seed: derive_seed(seed, "policy-init", 0), ..cfg };
            return Ok(Box::new(LinearSoftmaxPolicy::new(env.config(), cfg)?));
        }
        make_policy(&self.policy, env)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub ret: usize,
    pub boredom: usize,
}

/// Agent steps on which at least one topic was bored.
pub fn boredom_metric(trace: &[StepInfo]) -> usize {
    trace.iter().filter(|i| i.bored_topics > 0).count()
}

/// One full evaluation episode; the policy is not updated.
pub fn run_episode(
    env: &mut Simulator,
    policy: &dyn Policy,
    reset_seed: u64,
    rng: &mut SimRng,
) -> Result<(EpisodeSummary, Vec<StepInfo>)> {
    let mut obs = env.reset(Some(reset_seed));
    let mut trace = Vec::with_capacity(env.config().session_length);
    let mut ret = 0;
    loop {
        let slate = policy.select(env, &obs, rng);
        let out = env.step(&slate)?;
        ret += out.reward;
        trace.push(out.info);
        obs = out.observation;
        if out.terminated {
            break;
        }
    }
    let boredom = boredom_metric(&trace);
    Ok((EpisodeSummary { ret, boredom }, trace))
}

/// Validation episodes drawn from `validation_seed`.
pub fn evaluate(
    env: &mut Simulator,
    policy: &dyn Policy,
    n_episodes: usize,
    validation_seed: u64,
) -> Result<Vec<EpisodeSummary>> {
    let mut rng = seeded(derive_seed(validation_seed, "policy", 0));
    (0..n_episodes)
        .map(|j| {
            let reset = derive_seed(validation_seed, "episode", j as u64);
            run_episode(env, policy, reset, &mut rng).map(|(s, _)| s)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Half-width of the two-sided 95% Student-t interval around the mean.
pub fn ci95_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return 0.0;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    t * (var / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    pub seed: u64,
    pub checkpoint: usize,
    pub step: usize,
    pub mean_return: f64,
    pub return_ci: f64,
    pub mean_boredom: f64,
    pub boredom_ci: f64,
}

impl CheckpointMetrics {
    fn from_episodes(seed: u64, checkpoint: usize, step: usize, eps: &[EpisodeSummary]) -> Self {
        let r: Vec<f64> = eps.iter().map(|e| e.ret as f64).collect();
        let b: Vec<f64> = eps.iter().map(|e| e.boredom as f64).collect();
        CheckpointMetrics {
            seed,
            checkpoint,
            step,
            mean_return: mean(&r),
            return_ci: ci95_half_width(&r),
            mean_boredom: mean(&b),
            boredom_ci: ci95_half_width(&b),
        }
    }
}

/// Across-seed mean and 95% interval per checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub checkpoint: usize,
    pub step: usize,
    pub n_seeds: usize,
    pub mean_return: f64,
    pub return_ci: f64,
    pub mean_boredom: f64,
    pub boredom_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub per_seed: Vec<CheckpointMetrics>,
    pub aggregate: Vec<AggregateMetrics>,
}

impl MetricsRecord {
    pub fn from_per_seed(per_seed: Vec<CheckpointMetrics>) -> Self {
        let n_ckpt = per_seed.iter().map(|m| m.checkpoint + 1).max().unwrap_or(0);
        let aggregate = (0..n_ckpt)
            .map(|k| {
                let rows: Vec<&CheckpointMetrics> =
                    per_seed.iter().filter(|m| m.checkpoint == k).collect();
                let r: Vec<f64> = rows.iter().map(|m| m.mean_return).collect();
                let b: Vec<f64> = rows.iter().map(|m| m.mean_boredom).collect();
                AggregateMetrics {
                    checkpoint: k,
                    step: rows[0].step,
                    n_seeds: rows.len(),
                    mean_return: mean(&r),
                    return_ci: ci95_half_width(&r),
                    mean_boredom: mean(&b),
                    boredom_ci: ci95_half_width(&b),
                }
            })
            .collect();
        MetricsRecord { per_seed, aggregate }
    }

    pub fn final_aggregate(&self) -> &AggregateMetrics {
        self.aggregate.last().expect("at least checkpoint 0")
    }
}

/// Runs one seed with the given policy. Checkpoint 0 is before any training.
pub fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    policy: &mut dyn Policy,
) -> Result<Vec<CheckpointMetrics>> {
    let spec = config.env_spec(seed)?;
    let mut train_env = spec.build()?;
    let mut val_env = train_env.clone();
    let mut train_rng = seeded(derive_seed(seed, "train-policy", 0));
    let learning = policy.is_learning();

    let mut out = Vec::with_capacity(config.n_checkpoints());
    let mut episode = 0u64;
    let mut obs = None;
    let mut step = 0;
    for k in 0..config.n_checkpoints() {
        let target = k * config.validation_every;
        while learning && step < target {
            let o = match obs.take() {
                Some(o) => o,
                None => {
                    let o = train_env.reset(Some(derive_seed(seed, "train", episode)));
                    episode += 1;
                    o
                }
            };
            let slate = policy.train_select(&train_env, &o, &mut train_rng);
            let outcome = train_env.step(&slate)?;
            policy.train_feedback(&outcome);
            step += 1;
            if outcome.terminated {
                policy.train_episode_end();
            } else {
                obs = Some(outcome.observation);
            }
        }
        let vseed = derive_seed(seed, "validation", k as u64);
        let eps = evaluate(&mut val_env, &*policy, config.n_validation_episodes, vseed)?;
        out.push(CheckpointMetrics::from_episodes(seed, k, target, &eps));
    }
    Ok(out)
}

/// All seeds in parallel, each with its own environment and policy.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsRecord> {
    config.validate()?;
    let per_seed: Result<Vec<Vec<CheckpointMetrics>>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let env = config.env_spec(seed)?.build()?;
            let mut policy = config.build_policy(&env, seed)?;
            run_seed(config, seed, policy.as_mut())
        })
        .collect();
    Ok(MetricsRecord::from_per_seed(per_seed?.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    Omega,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub mean_return: f64,
    pub return_ci: f64,
    pub mean_boredom: f64,
    pub boredom_ci: f64,
    /// Final-checkpoint mean return of each seed, in seed order; written as
    /// one `;`-separated field so the row stays flat in CSV.
    #[serde(with = "joined")]
    pub seed_returns: Vec<f64>,
}

mod joined {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let text: Vec<String> = values.iter().map(f64::to_string).collect();
        s.serialize_str(&text.join(";"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        if text.is_empty() {
            return Ok(Vec::new());
        }
        text.split(';').map(|v| v.parse().map_err(D::Error::custom)).collect()
    }
}

/// Final-checkpoint metrics of one full experiment per value.
pub fn sweep(config: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    values
        .par_iter()
        .map(|&value| {
            let mut c = config.clone();
            match param {
                SweepParam::Lambda => c.lambda = Some(value),
                SweepParam::Omega => c.omega = Some(value),
            }
            let rec = run_experiment(&c)?;
            let last = rec.final_aggregate();
            let seed_returns = rec
                .per_seed
                .iter()
                .filter(|m| m.checkpoint == last.checkpoint)
                .map(|m| m.mean_return)
                .collect();
            Ok(SweepRow {
                value,
                mean_return: last.mean_return,
                return_ci: last.return_ci,
                mean_boredom: last.mean_boredom,
                boredom_ci: last.boredom_ci,
                seed_returns,
            })
        })
        .collect()
}

pub const SCORE_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    /// `SCORE_BINS + 1` bin edges over [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl ScoreHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Fraction of mass in bins whose lower edge is at least `threshold`.
    pub fn mass_above(&self, threshold: f64) -> f64 {
        let above: usize = self
            .counts
            .iter()
            .zip(&self.edges)
            .filter(|(_, &lo)| lo >= threshold - 1e-12)
            .map(|(c, _)| c)
            .sum();
        above as f64 / self.total().max(1) as f64
    }
}

/// Relevance scores of recommended items over `n_steps` agent steps.
pub fn score_distribution(
    env: &mut Simulator,
    policy: &dyn Policy,
    n_steps: usize,
    seed: u64,
) -> Result<ScoreHistogram> {
    let mut counts = vec![0; SCORE_BINS];
    let mut rng = seeded(derive_seed(seed, "scores-policy", 0));
    let mut episode = 0;
    let mut obs = env.reset(Some(derive_seed(seed, "scores", episode)));
    for _ in 0..n_steps {
        let slate = policy.select(env, &obs, &mut rng);
        let out = env.step(&slate)?;
        for &s in &out.info.scores {
            let b = ((s.clamp(0.0, 1.0) * SCORE_BINS as f64) as usize).min(SCORE_BINS - 1);
            counts[b] += 1;
        }
        obs = if out.terminated {
            episode += 1;
            env.reset(Some(derive_seed(seed, "scores", episode)))
        } else {
            out.observation
        };
    }
    let edges = (0..=SCORE_BINS).map(|b| b as f64 / SCORE_BINS as f64).collect();
    Ok(ScoreHistogram { edges, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub env: String,
    pub steps: usize,
    pub seconds: f64,
    pub steps_per_second: f64,
}

/// Wall-clock steps per second on the calling thread with a random policy,
/// resets included.
pub fn throughput_bench(env_name: &str, lambda: Option<f64>, n_steps: usize, seed: u64) -> Result<BenchResult> {
    let mut env = crate::envs::make_env(env_name, seed, lambda)?;
    let mut rng = seeded(derive_seed(seed, "bench", 0));
    let policy = RandomPolicy;
    let start = Instant::now();
    let mut obs = env.reset(Some(seed));
    for _ in 0..n_steps {
        let slate = policy.select(&env, &obs, &mut rng);
        let out = env.step(&slate)?;
        obs = if out.terminated { env.reset(None) } else { out.observation };
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchResult {
        env: env_name.to_string(),
        steps: n_steps,
        seconds,
        steps_per_second: n_steps as f64 / seconds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json" => Ok(OutputFormat::Jsonl),
            _ => Err(Error::InvalidArgument(format!("unknown format `{s}` (csv or jsonl)"))),
        }
    }
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        OutputFormat::Jsonl => {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = std::io::BufWriter::new(file);
            for r in rows {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

/// Writes `metrics.<ext>` (one row per seed and checkpoint) and
/// `aggregate.<ext>` (one row per checkpoint) into `dir`.
pub fn emit_metrics(record: &MetricsRecord, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    if record.per_seed.is_empty() {
        return Err(Error::InvalidArgument("no metrics to write".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Jsonl => "jsonl",
    };
    let per_seed = dir.join(format!("metrics.{ext}"));
    let aggregate = dir.join(format!("aggregate.{ext}"));
    write_rows(&record.per_seed, &per_seed, format)?;
    write_rows(&record.aggregate, &aggregate, format)?;
    Ok(vec![per_seed, aggregate])
}

pub fn write_table<T: Serialize>(rows: &[T], path: &Path, format: OutputFormat) -> Result<()> {
    write_rows(rows, path, format)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<CheckpointMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(bored: usize) -> StepInfo {
        StepInfo {
            bored_topics: bored,
            ..StepInfo::default()
        }
    }

    #[test]
    fn boredom_metric_counts_bored_steps() {
        let mut trace: Vec<StepInfo> = (0..100).map(|_| info(0)).collect();
        assert_eq!(boredom_metric(&trace), 0);
        for t in &mut trace[40..45] {
            *t = info(10);
        }
        assert_eq!(boredom_metric(&trace), 5);
        let churned: Vec<StepInfo> = (0..100).map(|_| info(10)).collect();
        assert_eq!(boredom_metric(&churned), 100);
    }

    #[test]
    fn ci_is_zero_for_identical_values() {
        assert_eq!(ci95_half_width(&[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(ci95_half_width(&[3.0]), 0.0);
        // t(0.975, 1) = 12.7062, sd = 1/sqrt(2), n = 2
        let h = ci95_half_width(&[1.0, 2.0]);
        assert!((h - 12.7062 * 0.5).abs() < 1e-3, "{h}");
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::desk("SingleItem-Static", "greedy");
        assert!(c.validate().is_ok());
        assert_eq!(c.n_checkpoints(), 11);
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        c.seeds = vec![1];
        c.env = "Nope".into();
        assert!(c.validate().is_err());
    }
}
