//! Catalog files with real item-topic assignments, and the like-based topic prior.
//!
//! The file is JSON lines: an optional header `{"topics": [...]}` fixing the
//! topic order, then one `{"id": .., "topics": [..], "like_count": ..}` record
//! per item. Without a header, topics are indexed in sorted name order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{Embedding, Simulator, SimulatorConfig};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogItem {
    pub id: u64,
    pub topics: Vec<String>,
    pub like_count: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogFile {
    topic_names: Vec<String>,
    items: Vec<CatalogItem>,
    /// Topic indices per item, aligned with `items`.
    supports: Vec<Vec<usize>>,
}

impl CatalogFile {
    pub fn new(topic_names: Vec<String>, items: Vec<CatalogItem>) -> Result<Self> {
        let bad = |m: String| Err(Error::MalformedCatalog(m));
        if items.is_empty() {
            return bad("no items".into());
        }
        let index: HashMap<&str, usize> = topic_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        if index.len() != topic_names.len() {
            return bad("duplicate topic names".into());
        }
        let mut ids = HashSet::new();
        let mut supports = Vec::with_capacity(items.len());
        for item in &items {
            if !ids.insert(item.id) {
                return bad(format!("duplicate item id {}", item.id));
            }
            if item.topics.is_empty() {
                return bad(format!("item {} has no topic", item.id));
            }
            let mut support = Vec::with_capacity(item.topics.len());
            for t in &item.topics {
                match index.get(t.as_str()) {
                    Some(&i) if !support.contains(&i) => support.push(i),
                    Some(_) => return bad(format!("item {} repeats topic {t}", item.id)),
                    None => return bad(format!("item {} has undeclared topic {t}", item.id)),
                }
            }
            support.sort_unstable();
            supports.push(support);
        }
        Ok(CatalogFile {
            topic_names,
            items,
            supports,
        })
    }

    /// Topics named in sorted order.
    pub fn from_items(items: Vec<CatalogItem>) -> Result<Self> {
        let names: BTreeSet<String> = items.iter().flat_map(|i| i.topics.iter().cloned()).collect();
        Self::new(names.into_iter().collect(), items)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<Vec<String>> = None;
        let mut items = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            };
            if items.is_empty() && header.is_none() && !line.contains("\"id\"") {
                let h: Header = serde_json::from_str(line).map_err(parse_err)?;
                header = Some(h.topics);
                continue;
            }
            items.push(serde_json::from_str::<CatalogItem>(line).map_err(parse_err)?);
        }
        match header {
            Some(names) => Self::new(names, items),
            None => Self::from_items(items),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({ "topics": self.topic_names }).to_string();
        out.push('\n');
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("item serializes"));
            out.push('\n');
        }
        out
    }

    pub fn topic_names(&self) -> &[String] {
        &self.topic_names
    }

    pub fn n_topics(&self) -> usize {
        self.topic_names.len()
    }

    pub fn items(&self) -> &[CatalogItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }
}

/// Categorical distribution over topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicPrior(Vec<f64>);

impl TopicPrior {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidPrior("negative or non-finite entry".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPrior(format!("sums to {total}, not 1")));
        }
        Ok(TopicPrior(probabilities))
    }

    pub fn uniform(n: usize) -> Self {
        TopicPrior(vec![1.0 / n as f64; n])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }
}

/// Mean likes per topic, normalized over topics.
pub fn compute_topic_prior(catalog: &CatalogFile) -> Result<TopicPrior> {
    let n = catalog.n_topics();
    let mut likes = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (item, support) in catalog.items.iter().zip(&catalog.supports) {
        for &t in support {
            likes[t] += item.like_count as f64;
            counts[t] += 1;
        }
    }
    if let Some(t) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MalformedCatalog(format!(
            "topic {} has no items",
            catalog.topic_names[t]
        )));
    }
    let means: Vec<f64> = likes.iter().zip(&counts).map(|(l, &c)| l / c as f64).collect();
    let total: f64 = means.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidPrior("no likes in catalog".into()));
    }
    TopicPrior::new(means.into_iter().map(|m| m / total).collect())
}

/// Simulator over a real catalog: topic supports come from the file, values
/// are uniform on the support then normalized, and users draw their topics
/// from the like-based prior. `n_items` and `n_topics` follow the catalog.
pub fn make_semi_synthetic_env(
    catalog: &CatalogFile,
    base: &SimulatorConfig,
    seed: u64,
) -> Result<Simulator> {
    let config = SimulatorConfig {
        n_items: catalog.len(),
        n_topics: catalog.n_topics(),
        master_seed: seed,
        ..base.clone()
    };
    config.validate()?;
    let prior = compute_topic_prior(catalog)?;
    let mut rng = stream_rng(seed, Stream::Catalog);
    let embeddings = catalog
        .supports
        .iter()
        .map(|s| Embedding::random_on_support(config.n_topics, s, &mut rng))
        .collect();
    Simulator::with_catalog(config, embeddings, Some(prior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn item(id: u64, topics: &[&str], likes: u64) -> CatalogItem {
        CatalogItem {
            id,
            topics: topics.iter().map(|s| s.to_string()).collect(),
            like_count: likes,
        }
    }

    #[test]
    fn prior_is_ratio_of_mean_likes() {
        let cat = CatalogFile::from_items(vec![
            item(0, &["a"], 5),
            item(1, &["a"], 15),
            item(2, &["b"], 30),
        ])
        .unwrap();
        let p = compute_topic_prior(&cat).unwrap();
        assert_abs_diff_eq!(p.probabilities()[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p.probabilities()[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn equal_means_give_uniform_prior() {
        let cat = CatalogFile::from_items(vec![
            item(0, &["x", "y"], 8),
            item(1, &["z"], 8),
            item(2, &["y", "z"], 8),
        ])
        .unwrap();
        let p = compute_topic_prior(&cat).unwrap();
        for &x in p.probabilities() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-12);
        }
        let single = CatalogFile::from_items(vec![item(0, &["only"], 3)]).unwrap();
        assert_eq!(compute_topic_prior(&single).unwrap().probabilities(), &[1.0]);
    }

    #[test]
    fn topic_without_items_is_an_error() {
        let cat = CatalogFile::new(
            vec!["a".into(), "b".into()],
            vec![item(0, &["a"], 1)],
        )
        .unwrap();
        assert!(matches!(compute_topic_prior(&cat), Err(Error::MalformedCatalog(_))));
    }

    #[test]
    fn malformed_catalogs_rejected() {
        assert!(CatalogFile::from_items(vec![]).is_err());
        assert!(CatalogFile::from_items(vec![item(0, &[], 1)]).is_err());
        assert!(CatalogFile::from_items(vec![item(0, &["a"], 1), item(0, &["b"], 1)]).is_err());
        assert!(CatalogFile::new(vec!["a".into()], vec![item(0, &["b"], 1)]).is_err());
        assert!(CatalogFile::parse("{\"id\": 1, \"topics\": [\"a\"]}").is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let cat = CatalogFile::new(
            vec!["Drama".into(), "Action".into(), "Romance".into()],
            vec![item(7, &["Drama", "Romance"], 10), item(9, &["Action"], 2)],
        )
        .unwrap();
        let back = CatalogFile::parse(&cat.to_jsonl()).unwrap();
        assert_eq!(back, cat);
        assert_eq!(back.supports()[0], vec![0, 2]);
    }

    #[test]
    fn semi_synthetic_supports_match_catalog() {
        let cat = CatalogFile::from_items(vec![
            item(0, &["Drama", "Romance"], 10),
            item(1, &["Action", "Drama", "Fantasy", "Romance"], 3),
            item(2, &["Fantasy"], 7),
            item(3, &["Action", "Comedy"], 1),
        ])
        .unwrap();
        let base = crate::envs::builtin("SlateRerank-Static", None).unwrap().config;
        let base = SimulatorConfig { slate_size: 2, ..base };
        let sim = make_semi_synthetic_env(&cat, &base, 11).unwrap();
        assert_eq!(sim.config().n_items, 4);
        assert_eq!(sim.config().n_topics, 5);
        for (e, s) in sim.catalog().iter().zip(cat.supports()) {
            assert_eq!(&e.support(), s);
            assert!((e.norm() - 1.0).abs() < 1e-9);
        }
    }
}
