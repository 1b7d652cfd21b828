//! Named environments and semi-synthetic catalogs.

mod catalog;
mod suite;

pub use catalog::{
    compute_topic_prior, make_semi_synthetic_env, CatalogFile, CatalogItem, TopicPrior,
};
pub use suite::{builtin, make_env, CatalogSource, EnvSpec, ENV_NAMES, UNCERTAIN_LAMBDAS};
