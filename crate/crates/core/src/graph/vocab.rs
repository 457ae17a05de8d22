use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

/// Reserved token string for out-of-vocabulary words.
pub const UNK_TOKEN: &str = "<unk>";
/// Id of [`UNK_TOKEN`]; always 0.
pub const UNK_ID: usize = 0;

/// Dense token → id map. Id 0 is the UNK token, the rest are assigned in
/// lexicographic token order so rebuilding from the same corpus is stable.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    min_count: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from whitespace-tokenized texts, keeping tokens
    /// that occur at least `min_count` times.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for text in texts {
            for tok in text.split_whitespace() {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut tokens = vec![UNK_TOKEN.to_string()];
        tokens.extend(
            counts
                .into_iter()
                .filter(|&(t, c)| c >= min_count && t != UNK_TOKEN)
                .map(|(t, _)| t.to_string()),
        );
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            index,
            tokens,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        // UNK is always present
        false
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Hex SHA-256 over the ordered token list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Maps whitespace-separated tokens to ids, unknown tokens to [`UNK_ID`].
pub fn tokenize_and_index(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    text.split_whitespace().map(|t| vocab.id(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexes_known_and_unknown_tokens() {
        let v = Vocabulary::build(["pikachu game", "game ar"], 1);
        let ids = tokenize_and_index("pikachu game", &v);
        assert_eq!(ids, vec![v.id("pikachu"), v.id("game")]);
        assert!(ids.iter().all(|&i| i != UNK_ID));
        assert_eq!(tokenize_and_index("zzzz", &v), vec![UNK_ID]);
        assert!(tokenize_and_index("", &v).is_empty());
    }

    #[test]
    fn ids_are_dense_and_rare_tokens_dropped() {
        let v = Vocabulary::build(["a a a b", "c a b"], 2);
        assert_eq!(v.len(), 3);
        assert_eq!(v.token(0), Some(UNK_TOKEN));
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("c"), UNK_ID);
    }

    #[test]
    fn literal_unk_maps_to_reserved_id() {
        let v = Vocabulary::build(["<unk> <unk> x"], 1);
        assert_eq!(v.id(UNK_TOKEN), UNK_ID);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn fingerprint_is_stable() {
        let a = Vocabulary::build(["x y z"], 1);
        let b = Vocabulary::build(["z y x"], 1);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), Vocabulary::build(["x y"], 1).fingerprint());
    }
}
