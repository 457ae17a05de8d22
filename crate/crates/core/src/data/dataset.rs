use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const ITEMS_FILE: &str = "items.tsv";
pub const QUERIES_FILE: &str = "queries.tsv";
pub const TAGS_FILE: &str = "tags.tsv";
pub const QUERY_ITEM_FILE: &str = "query_item_edges.tsv";
pub const ITEM_TAG_FILE: &str = "item_tag_edges.tsv";

/// A query, item or tag: external id plus whitespace-tokenized text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub text: String,
}

impl Entity {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Parsed dataset with edges resolved to entity positions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawDataset {
    pub items: Vec<Entity>,
    pub queries: Vec<Entity>,
    pub tags: Vec<Entity>,
    /// `(query, item, weight)`.
    pub query_item: Vec<(usize, usize, f64)>,
    /// `(item, tag)`.
    pub item_tag: Vec<(usize, usize)>,
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn read(dir: &Path, file: &str) -> Result<String> {
    let path = dir.join(file);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn parse_entities(file: &str, text: &str) -> Result<Vec<Entity>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let (id, rest) = match l.split_once('\t') {
            Some((id, rest)) => (id.trim(), rest),
            None => (l.trim(), ""),
        };
        if id.is_empty() {
            return Err(parse_err(file, line, "empty id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(parse_err(file, line, format!("duplicate id '{id}'")));
        }
        let text = rest.split_whitespace().collect::<Vec<_>>().join(" ");
        out.push(Entity::new(id, text));
    }
    Ok(out)
}

fn index_of(entities: &[Entity]) -> HashMap<&str, usize> {
    entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect()
}

impl RawDataset {
    /// Reads the five TSV files from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let items = parse_entities(ITEMS_FILE, &read(dir, ITEMS_FILE)?)?;
        let queries = parse_entities(QUERIES_FILE, &read(dir, QUERIES_FILE)?)?;
        let tags = parse_entities(TAGS_FILE, &read(dir, TAGS_FILE)?)?;
        let (item_idx, query_idx, tag_idx) = (index_of(&items), index_of(&queries), index_of(&tags));

        let mut query_item = Vec::new();
        for (line, l) in data_lines(&read(dir, QUERY_ITEM_FILE)?) {
            let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(parse_err(
                    QUERY_ITEM_FILE,
                    line,
                    format!("expected 2 or 3 columns, found {}", cols.len()),
                ));
            }
            let q = *query_idx
                .get(cols[0])
                .ok_or_else(|| parse_err(QUERY_ITEM_FILE, line, format!("unknown query '{}'", cols[0])))?;
            let i = *item_idx
                .get(cols[1])
                .ok_or_else(|| parse_err(QUERY_ITEM_FILE, line, format!("unknown item '{}'", cols[1])))?;
            let w = match cols.get(2) {
                None => 1.0,
                Some(&"") => 1.0,
                Some(s) => s
                    .parse::<f64>()
                    .ok()
                    .filter(|w| w.is_finite() && *w >= 0.0)
                    .ok_or_else(|| parse_err(QUERY_ITEM_FILE, line, format!("invalid weight '{s}'")))?,
            };
            query_item.push((q, i, w));
        }

        let mut item_tag = Vec::new();
        for (line, l) in data_lines(&read(dir, ITEM_TAG_FILE)?) {
            let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
            if cols.len() != 2 {
                return Err(parse_err(
                    ITEM_TAG_FILE,
                    line,
                    format!("expected 2 columns, found {}", cols.len()),
                ));
            }
            let i = *item_idx
                .get(cols[0])
                .ok_or_else(|| parse_err(ITEM_TAG_FILE, line, format!("unknown item '{}'", cols[0])))?;
            let t = *tag_idx
                .get(cols[1])
                .ok_or_else(|| parse_err(ITEM_TAG_FILE, line, format!("unknown tag '{}'", cols[1])))?;
            item_tag.push((i, t));
        }

        Ok(Self {
            items,
            queries,
            tags,
            query_item,
            item_tag,
        })
    }

    /// Writes the five TSV files into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |file: &str, body: String| -> Result<()> {
            let path = dir.join(file);
            fs::write(&path, body).map_err(|e| Error::io(path, e))
        };
        let entities = |es: &[Entity]| -> String {
            es.iter().map(|e| format!("{}\t{}\n", e.id, e.text)).collect()
        };
        write(ITEMS_FILE, entities(&self.items))?;
        write(QUERIES_FILE, entities(&self.queries))?;
        write(TAGS_FILE, entities(&self.tags))?;
        write(
            QUERY_ITEM_FILE,
            self.query_item
                .iter()
                .map(|&(q, i, w)| format!("{}\t{}\t{}\n", self.queries[q].id, self.items[i].id, w))
                .collect(),
        )?;
        write(
            ITEM_TAG_FILE,
            self.item_tag
                .iter()
                .map(|&(i, t)| format!("{}\t{}\n", self.items[i].id, self.tags[t].id))
                .collect(),
        )
    }

    /// Distinct tags of each item, ascending.
    pub fn item_tag_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.items.len()];
        for &(i, t) in &self.item_tag {
            sets[i].push(t);
        }
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        sets
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|e| e.id == id)
    }

    /// Every text in the dataset, for vocabulary construction.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.items
            .iter()
            .chain(&self.queries)
            .chain(&self.tags)
            .map(|e| e.text.as_str())
    }
}

/// Convenience wrapper for [`RawDataset::load`].
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<RawDataset> {
    RawDataset::load(dir)
}
