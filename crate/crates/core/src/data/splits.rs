use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::RawDataset;
use crate::error::{Error, Result};

/// Number of tags hidden from each completion item.
pub const HELD_OUT_PER_ITEM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    ValFull,
    ValComp,
    TestFull,
    TestComp,
    /// Left over when the requested counts do not cover every item. Such
    /// items stay in the graph with all their tags but are neither trained
    /// on nor evaluated.
    Unused,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::ValFull => "val_full",
            Role::ValComp => "val_comp",
            Role::TestFull => "test_full",
            Role::TestComp => "test_comp",
            Role::Unused => "unused",
        }
    }

    pub fn is_completion(self) -> bool {
        matches!(self, Role::ValComp | Role::TestComp)
    }

    pub fn is_full_prediction(self) -> bool {
        matches!(self, Role::ValFull | Role::TestFull)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => Role::Train,
            "val_full" => Role::ValFull,
            "val_comp" => Role::ValComp,
            "test_full" => Role::TestFull,
            "test_comp" => Role::TestComp,
            "unused" => Role::Unused,
            other => return Err(Error::invalid(format!("unknown role '{other}'"))),
        })
    }
}

/// Requested number of train, validation and test items. Validation and
/// test are each split in half between full prediction and completion
/// (the odd item goes to full prediction).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Role of every item, plus held-out tags for completion items.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitAssignment {
    roles: Vec<Role>,
    held_out: HashMap<usize, Vec<usize>>,
}

impl SplitAssignment {
    /// Validates and wraps explicit roles. `held_out` must cover exactly
    /// the completion items.
    pub fn new(roles: Vec<Role>, held_out: HashMap<usize, Vec<usize>>, item_tags: &[Vec<usize>]) -> Result<Self> {
        if roles.len() != item_tags.len() {
            return Err(Error::invalid(format!(
                "{} roles for {} items",
                roles.len(),
                item_tags.len()
            )));
        }
        for (i, r) in roles.iter().enumerate() {
            match (r.is_completion(), held_out.get(&i)) {
                (true, Some(h)) => {
                    if h.len() != HELD_OUT_PER_ITEM || h.iter().any(|t| !item_tags[i].contains(t)) {
                        return Err(Error::invalid(format!(
                            "item {i}: held-out tags must be {HELD_OUT_PER_ITEM} of its own tags"
                        )));
                    }
                    if item_tags[i].len() <= HELD_OUT_PER_ITEM {
                        return Err(Error::invalid(format!(
                            "item {i}: completion needs at least one known tag"
                        )));
                    }
                }
                (true, None) => {
                    return Err(Error::invalid(format!("item {i}: completion role without held-out tags")))
                }
                (false, Some(_)) => {
                    return Err(Error::invalid(format!("item {i}: held-out tags on a {r} item")))
                }
                (false, None) => {}
            }
        }
        let held_out = held_out
            .into_iter()
            .map(|(i, mut h)| {
                h.sort_unstable();
                (i, h)
            })
            .collect();
        Ok(Self { roles, held_out })
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role(&self, item: usize) -> Role {
        self.roles[item]
    }

    pub fn items_with(&self, role: Role) -> Vec<usize> {
        (0..self.roles.len()).filter(|&i| self.roles[i] == role).collect()
    }

    /// Held-out tags of a completion item, ascending.
    pub fn held_out(&self, item: usize) -> Option<&[usize]> {
        self.held_out.get(&item).map(Vec::as_slice)
    }

    /// Writes `item_id<TAB>role[<TAB>held,out]` lines.
    pub fn save(&self, path: impl AsRef<Path>, ds: &RawDataset) -> Result<()> {
        let mut body = String::new();
        for (i, role) in self.roles.iter().enumerate() {
            body.push_str(&ds.items[i].id);
            body.push('\t');
            body.push_str(role.as_str());
            if let Some(h) = self.held_out(i) {
                body.push('\t');
                let ids: Vec<&str> = h.iter().map(|&t| ds.tags[t].id.as_str()).collect();
                body.push_str(&ids.join(","));
            }
            body.push('\n');
        }
        let path = path.as_ref();
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`SplitAssignment::save`]. Every item must
    /// appear exactly once.
    pub fn load(path: impl AsRef<Path>, ds: &RawDataset) -> Result<Self> {
        let path = path.as_ref();
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| "splits.tsv".into());
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let item_idx: HashMap<&str, usize> =
            ds.items.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
        let tag_idx: HashMap<&str, usize> =
            ds.tags.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
        let err = |line: usize, message: String| Error::Parse {
            file: file.clone(),
            line,
            message,
        };
        let mut roles: Vec<Option<Role>> = vec![None; ds.items.len()];
        let mut held_out = HashMap::new();
        for (n, l) in text.lines().enumerate() {
            let line = n + 1;
            if l.trim().is_empty() || l.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(err(line, format!("expected 2 or 3 columns, found {}", cols.len())));
            }
            let item = *item_idx
                .get(cols[0])
                .ok_or_else(|| err(line, format!("unknown item '{}'", cols[0])))?;
            let role: Role = cols[1].parse().map_err(|e: Error| err(line, e.to_string()))?;
            if roles[item].replace(role).is_some() {
                return Err(err(line, format!("item '{}' listed twice", cols[0])));
            }
            if let Some(list) = cols.get(2).filter(|s| !s.is_empty()) {
                let tags = list
                    .split(',')
                    .map(|t| {
                        tag_idx
                            .get(t.trim())
                            .copied()
                            .ok_or_else(|| err(line, format!("unknown tag '{t}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                held_out.insert(item, tags);
            }
        }
        let roles = roles
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::invalid(format!("{file}: item '{}' has no role", ds.items[i].id))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(roles, held_out, &ds.item_tag_sets())
    }
}

/// Splits `tags` into `(known, held_out)` with a uniformly random
/// 2-subset held out. Both halves are returned ascending.
pub fn mask_completion_tags(tags: &[usize], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut set = tags.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.len() <= HELD_OUT_PER_ITEM {
        return Err(Error::invalid(format!(
            "tag completion needs at least {} tags, item has {}",
            HELD_OUT_PER_ITEM + 1,
            set.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    set.shuffle(&mut rng);
    let mut held = set[..HELD_OUT_PER_ITEM].to_vec();
    let mut known = set[HELD_OUT_PER_ITEM..].to_vec();
    held.sort_unstable();
    known.sort_unstable();
    Ok((known, held))
}

/// Random item partition. Completion roles are drawn only from items with
/// at least three tags.
pub fn make_splits(ds: &RawDataset, counts: SplitCounts, seed: u64) -> Result<SplitAssignment> {
    let n = ds.items.len();
    if counts.train + counts.val + counts.test > n {
        return Err(Error::invalid(format!(
            "split counts {}+{}+{} exceed {n} items",
            counts.train, counts.val, counts.test
        )));
    }
    let item_tags = ds.item_tag_sets();
    let val_comp = counts.val / 2;
    let test_comp = counts.test / 2;
    let (val_full, test_full) = (counts.val - val_comp, counts.test - test_comp);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let eligible: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| item_tags[i].len() > HELD_OUT_PER_ITEM)
        .collect();
    if eligible.len() < val_comp + test_comp {
        return Err(Error::invalid(format!(
            "{} completion items requested but only {} items have at least {} tags",
            val_comp + test_comp,
            eligible.len(),
            HELD_OUT_PER_ITEM + 1
        )));
    }
    let mut roles = vec![Role::Unused; n];
    for &i in &eligible[..val_comp] {
        roles[i] = Role::ValComp;
    }
    for &i in &eligible[val_comp..val_comp + test_comp] {
        roles[i] = Role::TestComp;
    }
    let rest: Vec<usize> = order.iter().copied().filter(|&i| roles[i] == Role::Unused).collect();
    let mut rest = rest.into_iter();
    for (role, k) in [(Role::ValFull, val_full), (Role::TestFull, test_full), (Role::Train, counts.train)] {
        for i in rest.by_ref().take(k) {
            roles[i] = role;
        }
    }

    let mut held_out = HashMap::new();
    for i in 0..n {
        if roles[i].is_completion() {
            let (_, held) = mask_completion_tags(&item_tags[i], rng.next_u64())?;
            held_out.insert(i, held);
        }
    }
    SplitAssignment::new(roles, held_out, &item_tags)
}
