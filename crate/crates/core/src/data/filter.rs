use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::dataset::{Entity, RawDataset};
use crate::error::{Error, Result};
use crate::graph::UNK_TOKEN;

/// Minimum degrees and word frequency kept by [`preprocess_filter`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub item_min_queries: usize,
    pub query_min_items: usize,
    pub item_min_tags: usize,
    pub tag_min_items: usize,
    pub word_min_count: usize,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            item_min_queries: 20,
            query_min_items: 20,
            item_min_tags: 5,
            tag_min_items: 15,
            word_min_count: 5,
        }
    }
}

/// Removes nodes violating the degree thresholds until nothing changes,
/// then replaces words rarer than `word_min_count` with the UNK token.
///
/// Queries and tags left without any item are always removed.
pub fn preprocess_filter(ds: &RawDataset, th: &FilterThresholds) -> Result<RawDataset> {
    let mut keep_items = vec![true; ds.items.len()];
    let mut keep_queries = vec![true; ds.queries.len()];
    let mut keep_tags = vec![true; ds.tags.len()];
    let qi: BTreeSet<(usize, usize)> = ds.query_item.iter().map(|&(q, i, _)| (q, i)).collect();
    let it: BTreeSet<(usize, usize)> = ds.item_tag.iter().copied().collect();
    let query_min = th.query_min_items.max(1);
    let tag_min = th.tag_min_items.max(1);

    loop {
        let mut item_q = vec![0usize; ds.items.len()];
        let mut item_t = vec![0usize; ds.items.len()];
        let mut query_i = vec![0usize; ds.queries.len()];
        let mut tag_i = vec![0usize; ds.tags.len()];
        for &(q, i) in &qi {
            if keep_queries[q] && keep_items[i] {
                item_q[i] += 1;
                query_i[q] += 1;
            }
        }
        for &(i, t) in &it {
            if keep_items[i] && keep_tags[t] {
                item_t[i] += 1;
                tag_i[t] += 1;
            }
        }
        let mut changed = false;
        for i in 0..ds.items.len() {
            if keep_items[i] && (item_q[i] < th.item_min_queries || item_t[i] < th.item_min_tags) {
                keep_items[i] = false;
                changed = true;
            }
        }
        for q in 0..ds.queries.len() {
            if keep_queries[q] && query_i[q] < query_min {
                keep_queries[q] = false;
                changed = true;
            }
        }
        for t in 0..ds.tags.len() {
            if keep_tags[t] && tag_i[t] < tag_min {
                keep_tags[t] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let remap = |keep: &[bool]| -> Vec<Option<usize>> {
        let mut next = 0;
        keep.iter()
            .map(|&k| {
                k.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let (item_map, query_map, tag_map) = (remap(&keep_items), remap(&keep_queries), remap(&keep_tags));
    let select = |es: &[Entity], keep: &[bool]| -> Vec<Entity> {
        es.iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(e, _)| e.clone())
            .collect()
    };
    let mut out = RawDataset {
        items: select(&ds.items, &keep_items),
        queries: select(&ds.queries, &keep_queries),
        tags: select(&ds.tags, &keep_tags),
        query_item: ds
            .query_item
            .iter()
            .filter_map(|&(q, i, w)| Some((query_map[q]?, item_map[i]?, w)))
            .collect(),
        item_tag: ds
            .item_tag
            .iter()
            .filter_map(|&(i, t)| Some((item_map[i]?, tag_map[t]?)))
            .collect(),
    };
    if out.items.is_empty() {
        return Err(Error::invalid("no items survive the degree thresholds"));
    }

    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in out.texts() {
        for tok in text.split_whitespace() {
            *counts.entry(tok.to_string()).or_default() += 1;
        }
    }
    let rewrite = |e: &mut Entity| {
        e.text = e
            .text
            .split_whitespace()
            .map(|t| {
                if counts[t] >= th.word_min_count {
                    t
                } else {
                    UNK_TOKEN
                }
            })
            .collect::<Vec<_>>()
            .join(" ");
    };
    out.items.iter_mut().for_each(rewrite);
    out.queries.iter_mut().for_each(rewrite);
    out.tags.iter_mut().for_each(rewrite);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loose() -> FilterThresholds {
        FilterThresholds {
            item_min_queries: 0,
            query_min_items: 1,
            item_min_tags: 1,
            tag_min_items: 1,
            word_min_count: 1,
        }
    }

    fn ds() -> RawDataset {
        RawDataset {
            items: vec![
                Entity::new("i0", "red car"),
                Entity::new("i1", "blue car"),
                Entity::new("i2", "rare"),
            ],
            queries: vec![Entity::new("q0", "car")],
            tags: vec![
                Entity::new("t0", "vehicle"),
                Entity::new("t1", "color"),
                Entity::new("t2", "odd"),
            ],
            query_item: vec![(0, 0, 1.0), (0, 1, 2.0)],
            item_tag: vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)],
        }
    }

    #[test]
    fn satisfied_dataset_is_unchanged() {
        let d = ds();
        assert_eq!(preprocess_filter(&d, &loose()).unwrap(), d);
    }

    #[test]
    fn removal_cascades_to_tags() {
        let th = FilterThresholds {
            item_min_tags: 2,
            ..loose()
        };
        let out = preprocess_filter(&ds(), &th).unwrap();
        assert_eq!(out.items.len(), 2);
        assert_eq!(out.tags.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(), ["t0", "t1"]);
        assert_eq!(out.item_tag, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn rare_words_become_unk() {
        let mut d = ds();
        d.items[0].text = "w w w w".into();
        let th = FilterThresholds {
            word_min_count: 5,
            ..loose()
        };
        let out = preprocess_filter(&d, &th).unwrap();
        assert_eq!(out.items[0].text, "<unk> <unk> <unk> <unk>");
        d.items[1].text = "w".into();
        let out = preprocess_filter(&d, &th).unwrap();
        assert_eq!(out.items[0].text, "w w w w");
    }

    #[test]
    fn filter_is_idempotent_and_can_empty_out() {
        let th = FilterThresholds {
            item_min_queries: 1,
            item_min_tags: 2,
            word_min_count: 2,
            ..loose()
        };
        let once = preprocess_filter(&ds(), &th).unwrap();
        assert_eq!(preprocess_filter(&once, &th).unwrap(), once);
        let strict = FilterThresholds {
            item_min_tags: 10,
            ..loose()
        };
        assert!(preprocess_filter(&ds(), &strict).is_err());
    }
}
