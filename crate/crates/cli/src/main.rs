//! Command-line front end to the simulator, baselines and experiment harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use slatesim::click_models::{
    fit_dctr, fit_pbm, normalized_propensities, propensity_mse, ClickModel, ModelRanker, PbmFitConfig,
};
use slatesim::envs::{builtin, ENV_NAMES, UNCERTAIN_LAMBDAS};
use slatesim::harness::{
    emit_metrics, evaluate, run_experiment, score_distribution, sweep, throughput_bench, write_table,
    ExperimentConfig, OutputFormat, SweepParam,
};
use slatesim::log::{generate_log, InteractionLog};
use slatesim::mf::{export_item_embeddings, fit_mf, fit_user_projection, load_learned_greedy, save_learned, MfConfig};
use slatesim::policies::{make_policy, GreedyOracle, LinearSoftmaxPolicy, Policy, ReinforceConfig, ReverseOracle};
use slatesim::rng::derive_seed;
use slatesim::{Simulator, SimulatorConfig};

#[derive(Parser)]
#[command(name = "slatesim", version, about = "Slate recommendation simulator and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and validate a policy over one or more seeds.
    Run(RunArgs),
    /// Repeat a run for each value of the click scale or the influence weight.
    Sweep(SweepArgs),
    /// Record sessions of a policy as an interaction log.
    Log(LogArgs),
    /// Fit a click model to an interaction log.
    FitClickModel(FitClickArgs),
    /// Fit matrix-factorization item embeddings to an interaction log.
    FitMf(FitMfArgs),
    /// Rerank online with a fitted click model and compare against the oracles.
    DeployRerank(DeployArgs),
    /// Histogram of relevance scores of recommended items.
    Scores(ScoresArgs),
    /// Steps per second with a random policy on the calling thread.
    Bench(BenchArgs),
    /// List the built-in environments.
    ListEnvs,
}

#[derive(Args, Clone)]
struct EnvArgs {
    #[arg(long)]
    env: String,
    /// Click-scale override.
    #[arg(long)]
    lambda: Option<f64>,
    /// Influence weight override; 1 disables influence.
    #[arg(long)]
    omega: Option<f64>,
    /// JSON-lines catalog for a semi-synthetic environment.
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long, default_value = "random")]
    policy: String,
    /// TOML file with learning-rate, gamma and buffer-size keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Learned item table; the greedy policy then ranks with it.
    #[arg(long)]
    item_embeddings: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Single seed; shorthand for `--seeds N`.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Training steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    validation_every: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    /// 500k steps, a checkpoint every 50k, 5 seeds.
    #[arg(long)]
    full_scale: bool,
    /// Output directory for metric tables.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Lambda,
    Omega,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    param: Param,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct LogArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value = "mixture")]
    policy: String,
    #[arg(long, default_value_t = 1000)]
    sessions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Pbm,
    Dctr,
}

#[derive(Args)]
struct FitClickArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value = "pbm")]
    model: ModelKind,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitMfArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Item table path; the user projection is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DeployArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Model written by `fit-click-model`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct ScoresArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(serde::Serialize)]
struct PolicyReturn {
    policy: String,
    mean_return: f64,
    gap_closed: Option<f64>,
}

#[derive(serde::Serialize)]
struct Bin {
    lower: f64,
    upper: f64,
    count: usize,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => run(&a),
        Command::Sweep(a) => run_sweep(&a),
        Command::Log(a) => log(&a),
        Command::FitClickModel(a) => fit_click_model(&a),
        Command::FitMf(a) => fit_embeddings(&a),
        Command::DeployRerank(a) => deploy_rerank(&a),
        Command::Scores(a) => scores(&a),
        Command::Bench(a) => bench(&a),
        Command::ListEnvs => list_envs(),
    }
}

/// Reads a policy TOML and lays it over the defaults for `env`.
fn reinforce_config(path: Option<&Path>, env: &SimulatorConfig) -> Result<Option<ReinforceConfig>> {
    path.map(|p| {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(ReinforceConfig::for_env(env).with_toml(&text)?)
    })
    .transpose()
}

fn experiment_config(a: &RunArgs, lambda: Option<f64>) -> Result<ExperimentConfig> {
    let mut cfg = if a.full_scale {
        ExperimentConfig::full_scale(&a.env.env, &a.policy.policy)
    } else {
        ExperimentConfig::desk(&a.env.env, &a.policy.policy)
    };
    cfg.lambda = lambda.or(a.env.lambda);
    cfg.omega = a.env.omega;
    cfg.catalog.clone_from(&a.env.catalog);
    cfg.item_embeddings.clone_from(&a.policy.item_embeddings);
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = &a.seeds {
        cfg.seeds.clone_from(s);
    }
    let env = cfg.env_spec(cfg.seeds.first().copied().unwrap_or(0))?.config;
    cfg.reinforce = reinforce_config(a.policy.config.as_deref(), &env)?;
    if let Some(n) = a.steps {
        cfg.n_training_steps = n;
        if a.validation_every.is_none() {
            cfg.validation_every = cfg.validation_every.min(n.max(1));
        }
    }
    if let Some(n) = a.validation_every {
        cfg.validation_every = n;
    }
    if let Some(n) = a.episodes {
        cfg.n_validation_episodes = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Builds a standalone environment from the same flags the harness uses.
fn build_env(a: &EnvArgs, seed: u64) -> Result<Simulator> {
    let cfg = ExperimentConfig {
        lambda: a.lambda,
        omega: a.omega,
        catalog: a.catalog.clone(),
        ..ExperimentConfig::desk(&a.env, "random")
    };
    Ok(cfg.env_spec(seed)?.build()?)
}

fn build_policy(a: &PolicyArgs, env: &Simulator) -> Result<Box<dyn Policy>> {
    if let Some(path) = &a.item_embeddings {
        if a.policy != "greedy" {
            bail!("--item-embeddings only applies to the greedy policy");
        }
        let c = env.config();
        return Ok(Box::new(load_learned_greedy(path, c.n_items, c.n_topics)?));
    }
    if let Some(cfg) = reinforce_config(a.config.as_deref(), env.config())? {
        if a.policy != "reinforce" {
            bail!("--config only applies to the reinforce policy");
        }
        return Ok(Box::new(LinearSoftmaxPolicy::new(env.config(), cfg)?));
    }
    Ok(make_policy(&a.policy, env)?)
}

fn run(a: &RunArgs) -> Result<()> {
    let cfg = experiment_config(a, None)?;
    let record = run_experiment(&cfg)?;
    println!("checkpoint\tstep\treturn\t±95%\tboredom\t±95%");
    for m in &record.aggregate {
        println!(
            "{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            m.checkpoint, m.step, m.mean_return, m.return_ci, m.mean_boredom, m.boredom_ci
        );
    }
    if let Some(dir) = &a.out {
        for p in emit_metrics(&record, dir, a.format)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    // Validation needs a scale for families without a default one.
    let (param, lambda) = match a.param {
        Param::Lambda => (SweepParam::Lambda, a.values.first().copied()),
        Param::Omega => (SweepParam::Omega, None),
    };
    let cfg = experiment_config(&a.run, lambda)?;
    let rows = sweep(&cfg, param, &a.values)?;
    println!("value\treturn\t±95%\tboredom\t±95%");
    for r in &rows {
        println!(
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            r.value, r.mean_return, r.return_ci, r.mean_boredom, r.boredom_ci
        );
    }
    if let Some(dir) = &a.run.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("sweep.{}", extension(a.run.format)));
        write_table(&rows, &path, a.run.format)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn extension(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Jsonl => "jsonl",
    }
}

fn log(a: &LogArgs) -> Result<()> {
    let mut env = build_env(&a.env, a.seed)?;
    let policy = make_policy(&a.policy, &env)?;
    let log = generate_log(&mut env, &a.env.env, policy.as_ref(), a.sessions, a.seed)?;
    log.save(&a.out)?;
    eprintln!(
        "wrote {} rows, {} clicks to {}",
        log.len(),
        log.n_clicks(),
        a.out.display()
    );
    Ok(())
}

fn fit_click_model(a: &FitClickArgs) -> Result<()> {
    let log = InteractionLog::load(&a.log)?;
    let model = match a.model {
        ModelKind::Dctr => {
            let p = fit_dctr(&log)?;
            println!("unseen items: {}", p.unseen_items().len());
            ClickModel::Dctr(p)
        }
        ModelKind::Pbm => {
            let defaults = PbmFitConfig::default();
            let cfg = PbmFitConfig {
                max_iters: a.max_iters.unwrap_or(defaults.max_iters),
                tolerance: a.tolerance.unwrap_or(defaults.tolerance),
                init_seed: a.seed,
                ..defaults
            };
            let fit = fit_pbm(&log, &cfg)?;
            let norm = normalized_propensities(&fit.params.examinations())?;
            println!(
                "iterations {} converged {} log-likelihood {:.5}",
                fit.iterations,
                fit.converged,
                fit.log_likelihoods.last().copied().unwrap_or(f64::NAN)
            );
            println!("normalized propensities {}", fmt_values(&norm));
            // Built-in logs carry the examination decay that generated them.
            if let Ok(spec) = builtin(&log.header.env, None) {
                let truth: Vec<f64> = (0..norm.len())
                    .map(|r| spec.config.epsilon_decay.powi(r as i32))
                    .collect();
                println!("propensity mse {:.5}", propensity_mse(&norm, &truth)?);
            }
            ClickModel::Pbm(fit.params)
        }
    };
    std::fs::write(&a.out, model.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn fit_embeddings(a: &FitMfArgs) -> Result<()> {
    let log = InteractionLog::load(&a.log)?;
    let cfg = MfConfig {
        dim: a.dim,
        epochs: a.epochs,
        seed: a.seed,
        ..MfConfig::default()
    };
    let model = fit_mf(&log, &cfg)?;
    let n_topics = log.header.observation_len / 3;
    let projection = fit_user_projection(&model, &log, n_topics)?;
    let table = export_item_embeddings(&model);
    save_learned(&table, &projection, &a.out)?;
    println!(
        "log-loss {:.4} -> {:.4}",
        model.epoch_losses[0],
        model.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn deploy_rerank(a: &DeployArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let ranker = ModelRanker {
        model: ClickModel::from_json(&text)?,
    };
    let validation = derive_seed(a.seed, "deploy", 0);
    let mean = |p: &dyn Policy| -> Result<f64> {
        let mut env = build_env(&a.env, a.seed)?;
        let eps = evaluate(&mut env, p, a.episodes, validation)?;
        Ok(eps.iter().map(|e| e.ret as f64).sum::<f64>() / eps.len() as f64)
    };
    let greedy = mean(&GreedyOracle)?;
    let reverse = mean(&ReverseOracle)?;
    let model = mean(&ranker)?;
    let gap = greedy - reverse;
    let closed = (gap != 0.0).then(|| (model - reverse) / gap);
    let rows = vec![
        PolicyReturn { policy: "greedy".into(), mean_return: greedy, gap_closed: Some(1.0) },
        PolicyReturn { policy: "reverse".into(), mean_return: reverse, gap_closed: Some(0.0) },
        PolicyReturn { policy: ranker.name().into(), mean_return: model, gap_closed: closed },
    ];
    println!("policy\treturn\tgap closed");
    for r in &rows {
        let g = r.gap_closed.map_or("-".to_string(), |g| format!("{:.1}%", 100.0 * g));
        println!("{}\t{:.2}\t{}", r.policy, r.mean_return, g);
    }
    if let Some(path) = &a.out {
        write_table(&rows, path, a.format)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn scores(a: &ScoresArgs) -> Result<()> {
    let mut env = build_env(&a.env, a.seed)?;
    let policy = build_policy(&a.policy, &env)?;
    let hist = score_distribution(&mut env, policy.as_ref(), a.steps, a.seed)?;
    let bins: Vec<Bin> = hist
        .counts
        .iter()
        .zip(hist.edges.windows(2))
        .map(|(&count, e)| Bin { lower: e[0], upper: e[1], count })
        .collect();
    match &a.out {
        Some(path) => {
            write_table(&bins, path, a.format)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            println!("lower\tupper\tcount");
            for b in &bins {
                println!("{:.2}\t{:.2}\t{}", b.lower, b.upper, b.count);
            }
        }
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let r = throughput_bench(&a.env, a.lambda, a.steps, a.seed)?;
    println!(
        "{}: {} steps in {:.3}s, {:.0} steps/s",
        r.env, r.steps, r.seconds, r.steps_per_second
    );
    Ok(())
}

fn list_envs() -> Result<()> {
    println!("name\tslate\titems\tobservation\tboredom\tomega\tlambda");
    for name in ENV_NAMES {
        let c = match builtin(name, None) {
            Ok(spec) => spec.config,
            Err(_) => builtin(name, Some(UNCERTAIN_LAMBDAS[0]))?.config,
        };
        let lambda = if builtin(name, None).is_ok() {
            c.lambda_scale.to_string()
        } else {
            UNCERTAIN_LAMBDAS.map(|l| l.to_string()).join("|")
        };
        println!(
            "{name}\t{}\t{}\t{:?}\t{}\t{}\t{lambda}",
            c.slate_size,
            c.n_items,
            c.observability,
            c.has_boredom(),
            c.omega,
        );
    }
    Ok(())
}
