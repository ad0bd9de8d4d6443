use std::collections::HashMap;

use kgtext_core::kg::{ATTR, BLANKED, EOF, SEP};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Always present, always at these ids.
pub const SPECIALS: [&str; 10] = [PAD, UNK, BOS, EOS, SEP, EOF, BLANKED, ATTR, "and", "is"];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Specials first, then corpus tokens by descending count with ties
    /// broken alphabetically. `max_size` caps the total size.
    pub fn build<'a, I, S>(sequences: I, max_size: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in sequences {
            for t in seq {
                *counts.entry(t.as_ref()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|(t, _)| !SPECIALS.contains(t)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let room = max_size.map_or(usize::MAX, |m| m.saturating_sub(tokens.len()));
        tokens.extend(ranked.into_iter().take(room).map(|(t, _)| t.to_string()));
        Vocabulary::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_and_order() {
        let corpus = [vec!["b", "a", "b"], vec!["c", "a", "b", "SEP"]];
        let v = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), None);
        assert_eq!(&v.tokens()[..10], SPECIALS.map(String::from).as_slice());
        assert_eq!(&v.tokens()[10..], ["b", "a", "c"]);
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.id(EOS), EOS_ID);
        assert_eq!(v.hash(), Vocabulary::build(corpus.iter().map(|s| s.as_slice()), None).hash());

        let capped = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), Some(11));
        assert_eq!(capped.len(), 11);
        let json = serde_json::to_string(&capped).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), capped);
    }
}
