use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::engine::{BoredomVariant, Observability, Simulator, SimulatorConfig};
use crate::error::{Error, Result};

pub const ENV_NAMES: [&str; 9] = [
    "SingleItem-Static",
    "SingleItem-PartialObs",
    "SingleItem-BoredInf",
    "SlateTopK-Bored",
    "SlateTopK-BoredInf",
    "SlateTopK-PartialObs",
    "SlateTopK-Uncertain",
    "SlateRerank-Static",
    "SlateRerank-Bored",
];

/// Scale values studied for the uncertain slate environment.
pub const UNCERTAIN_LAMBDAS: [f64; 3] = [10.0, 5.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogSource {
    Synthetic,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub config: SimulatorConfig,
    pub catalog_source: CatalogSource,
}

struct Row {
    session_length: usize,
    slate_size: usize,
    n_items: usize,
    lambda_scale: f64,
    mu_shift: f64,
    boredom: bool,
    omega: f64,
    observability: Observability,
}

const TOPK: Row = Row {
    session_length: 100,
    slate_size: 10,
    n_items: 1000,
    lambda_scale: 100.0,
    mu_shift: 0.65,
    boredom: true,
    omega: 1.0,
    observability: Observability::Full,
};

const SINGLE: Row = Row { slate_size: 1, boredom: false, ..TOPK };

const RERANK: Row = Row {
    session_length: 10,
    n_items: 10,
    lambda_scale: 5.0,
    mu_shift: 0.30,
    boredom: false,
    ..TOPK
};

fn row(name: &str) -> Option<Row> {
    let partial = Observability::Partial;
    Some(match name {
        "SingleItem-Static" => SINGLE,
        "SingleItem-PartialObs" => Row { observability: partial, ..SINGLE },
        "SingleItem-BoredInf" => Row { boredom: true, omega: 0.95, ..SINGLE },
        "SlateTopK-Bored" => TOPK,
        "SlateTopK-BoredInf" => Row { omega: 0.95, ..TOPK },
        "SlateTopK-PartialObs" => Row { omega: 0.95, observability: partial, ..TOPK },
        "SlateTopK-Uncertain" => Row { omega: 0.95, observability: partial, ..TOPK },
        "SlateRerank-Static" => RERANK,
        "SlateRerank-Bored" => Row { boredom: true, ..RERANK },
        _ => return None,
    })
}

fn config_from(row: Row) -> SimulatorConfig {
    SimulatorConfig {
        session_length: row.session_length,
        slate_size: row.slate_size,
        n_items: row.n_items,
        n_topics: 10,
        lambda_scale: row.lambda_scale,
        mu_shift: row.mu_shift,
        alpha_range: 1.0,
        epsilon_decay: 0.85,
        // Static environments keep the window constants so the histogram
        // part of the observation stays defined.
        n_b: 10,
        t_b: 5,
        tau_b: 5,
        omega: row.omega,
        observability: row.observability,
        boredom_variant: if row.boredom {
            BoredomVariant::ChurnAndReturn
        } else {
            BoredomVariant::None
        },
        master_seed: 0,
        renormalize_influence: true,
        strict_boredom_threshold: false,
    }
}

/// Splits `SlateTopK-Uncertain5` style aliases into name and scale.
fn split_alias(name: &str) -> (&str, Option<f64>) {
    const BASE: &str = "SlateTopK-Uncertain";
    match name.strip_prefix(BASE) {
        Some(rest) if !rest.is_empty() => match rest.parse::<f64>() {
            Ok(l) => (BASE, Some(l)),
            Err(_) => (name, None),
        },
        _ => (name, None),
    }
}

/// Built-in environment spec. `lambda` is required by (and only accepted
/// for) `SlateTopK-Uncertain`; `SlateTopK-Uncertain{10,5,2}` aliases carry it
/// in the name.
pub fn builtin(name: &str, lambda: Option<f64>) -> Result<EnvSpec> {
    let (base, alias_lambda) = split_alias(name);
    let r = row(base).ok_or_else(|| Error::UnknownEnv(name.to_string()))?;
    let mut config = config_from(r);
    let lambda = match (lambda, alias_lambda) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::InvalidArgument(format!(
                "{name} conflicts with lambda {a}"
            )))
        }
        (a, b) => a.or(b),
    };
    if base == "SlateTopK-Uncertain" {
        let l = lambda.ok_or_else(|| {
            Error::InvalidArgument("SlateTopK-Uncertain needs a lambda (e.g. 10, 5 or 2)".into())
        })?;
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {l} must be positive")));
        }
        config.lambda_scale = l;
    } else if lambda.is_some() {
        return Err(Error::InvalidArgument(format!(
            "{name} has a fixed lambda; only SlateTopK-Uncertain accepts one"
        )));
    }
    Ok(EnvSpec {
        name: base.to_string(),
        config,
        catalog_source: CatalogSource::Synthetic,
    })
}

impl EnvSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.master_seed = seed;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidArgument(format!("omega {omega} outside [0, 1]")));
        }
        self.config.omega = omega;
        Ok(self)
    }

    pub fn build(&self) -> Result<Simulator> {
        match &self.catalog_source {
            CatalogSource::Synthetic => Simulator::new(self.config.clone()),
            CatalogSource::File(path) => {
                let catalog = super::CatalogFile::load(path)?;
                super::make_semi_synthetic_env(&catalog, &self.config, self.config.master_seed)
            }
        }
    }
}

pub fn make_env(name: &str, seed: u64, lambda: Option<f64>) -> Result<Simulator> {
    builtin(name, lambda)?.with_seed(seed).build()
}
