//! Seeded cluster-structured datasets for capacity and ablation checks.
//!
//! Every item, query and tag belongs to one of `n_clusters` clusters. An
//! item's tags come from its cluster's tags; how much its title words and
//! its query neighbors reveal that cluster is set by the signal knobs.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Entity, RawDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_items: usize,
    pub n_queries: usize,
    pub n_tags: usize,
    pub n_clusters: usize,
    pub min_tags_per_item: usize,
    pub max_tags_per_item: usize,
    /// Probability that an item tag is drawn from the item's own cluster.
    pub tag_purity: f64,
    pub title_len: usize,
    /// Probability that a title word is a cluster word rather than noise.
    pub title_signal: f64,
    pub queries_per_item: usize,
    /// Probability that a query neighbor comes from the item's cluster.
    pub query_signal: f64,
    /// Probability that a query word is a cluster word.
    pub query_text_signal: f64,
    /// Add a cluster word to each tag name.
    pub tag_name_signal: bool,
    pub words_per_cluster: usize,
    pub noise_words: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_items: 200,
            n_queries: 60,
            n_tags: 40,
            n_clusters: 8,
            min_tags_per_item: 3,
            max_tags_per_item: 5,
            tag_purity: 1.0,
            title_len: 6,
            title_signal: 0.5,
            queries_per_item: 3,
            query_signal: 0.9,
            query_text_signal: 0.5,
            tag_name_signal: true,
            words_per_cluster: 6,
            noise_words: 40,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// 50 items, 20 tags, 30 queries with informative titles.
    pub fn overfit(seed: u64) -> Self {
        Self {
            n_items: 50,
            n_queries: 30,
            n_tags: 20,
            n_clusters: 5,
            max_tags_per_item: 4,
            title_signal: 0.7,
            seed,
            ..Self::default()
        }
    }

    /// Titles carry the cluster; queries are uninformative.
    pub fn cold_start(seed: u64) -> Self {
        Self {
            title_signal: 0.4,
            query_signal: 0.0,
            query_text_signal: 0.0,
            tag_name_signal: false,
            seed,
            ..Self::default()
        }
    }

    /// Titles and tag names are noise; the cluster is only visible through
    /// the queries an item co-occurs with.
    pub fn query_signal(seed: u64) -> Self {
        Self {
            title_signal: 0.0,
            query_signal: 0.95,
            query_text_signal: 0.8,
            tag_name_signal: false,
            queries_per_item: 4,
            seed,
            ..Self::default()
        }
    }

    /// Weak titles; tags are the main evidence of an item's cluster.
    pub fn completion(seed: u64) -> Self {
        Self {
            title_signal: 0.1,
            query_signal: 0.0,
            query_text_signal: 0.0,
            min_tags_per_item: 4,
            max_tags_per_item: 5,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("synthetic config: {m}")));
        if self.n_items == 0 || self.n_tags == 0 || self.n_clusters == 0 {
            return bad("items, tags and clusters must be positive");
        }
        if self.n_tags < self.n_clusters {
            return bad("need at least one tag per cluster");
        }
        if self.min_tags_per_item == 0 || self.min_tags_per_item > self.max_tags_per_item {
            return bad("invalid tags-per-item range");
        }
        if self.max_tags_per_item > self.n_tags / self.n_clusters {
            return bad("max_tags_per_item exceeds the tags of one cluster");
        }
        if self.queries_per_item > 0 && self.n_queries < self.n_clusters {
            return bad("need at least one query per cluster");
        }
        if self.words_per_cluster == 0 || self.noise_words == 0 {
            return bad("word pools must be non-empty");
        }
        for p in [self.tag_purity, self.title_signal, self.query_signal, self.query_text_signal] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Generated dataset plus the cluster of every item.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub dataset: RawDataset,
    pub item_clusters: Vec<usize>,
}

fn members(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for x in 0..n {
        out[x % k].push(x);
    }
    out
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.n_clusters;
    let cluster_word = |c: usize, w: usize| format!("c{c}w{w}");
    let noise = |rng: &mut ChaCha8Rng| format!("n{}", rng.random_range(0..cfg.noise_words));
    let text = |rng: &mut ChaCha8Rng, c: usize, signal: f64, len: usize| -> String {
        (0..len)
            .map(|_| {
                if rng.random::<f64>() < signal {
                    cluster_word(c, rng.random_range(0..cfg.words_per_cluster))
                } else {
                    noise(rng)
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let tags_of = members(cfg.n_tags, k);
    let queries_of = members(cfg.n_queries, k);
    let tags = (0..cfg.n_tags)
        .map(|t| {
            let mut name = format!("tag{t}");
            if cfg.tag_name_signal {
                name.push(' ');
                name.push_str(&cluster_word(t % k, rng.random_range(0..cfg.words_per_cluster)));
            }
            Entity::new(format!("t{t}"), name)
        })
        .collect();
    let queries = (0..cfg.n_queries)
        .map(|q| {
            let body = text(&mut rng, q % k, cfg.query_text_signal, 3);
            Entity::new(format!("q{q}"), body)
        })
        .collect();

    let mut items = Vec::with_capacity(cfg.n_items);
    let mut item_clusters = Vec::with_capacity(cfg.n_items);
    let mut item_tag = Vec::new();
    let mut query_item = Vec::new();
    for i in 0..cfg.n_items {
        let c = i % k;
        item_clusters.push(c);
        items.push(Entity::new(format!("i{i}"), text(&mut rng, c, cfg.title_signal, cfg.title_len)));

        let n_tags = rng.random_range(cfg.min_tags_per_item..=cfg.max_tags_per_item);
        let mut chosen = BTreeSet::new();
        let mut own = tags_of[c].clone();
        own.shuffle(&mut rng);
        let mut own = own.into_iter();
        while chosen.len() < n_tags {
            let t = if rng.random::<f64>() < cfg.tag_purity {
                own.next().unwrap_or_else(|| rng.random_range(0..cfg.n_tags))
            } else {
                rng.random_range(0..cfg.n_tags)
            };
            chosen.insert(t);
        }
        item_tag.extend(chosen.into_iter().map(|t| (i, t)));

        let mut linked = BTreeSet::new();
        let mut attempts = 0;
        while linked.len() < cfg.queries_per_item.min(cfg.n_queries) && attempts < 100 * cfg.queries_per_item {
            attempts += 1;
            let q = if rng.random::<f64>() < cfg.query_signal {
                *queries_of[c].choose(&mut rng).expect("cluster has queries")
            } else {
                rng.random_range(0..cfg.n_queries)
            };
            if linked.insert(q) {
                query_item.push((q, i, rng.random_range(1..=5) as f64));
            }
        }
    }
    Ok(SyntheticData {
        dataset: RawDataset {
            items,
            queries,
            tags,
            query_item,
            item_tag,
        },
        item_clusters,
    })
}
