//! English preprocessing used by the rule-based text-to-graph converter:
//! a punctuation-aware tokenizer and a deterministic lexicon + suffix tagger.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");
const BUNDLED_SUFFIXES: &str = include_str!("../data/suffixes.tsv");
const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Copulas. Tagged VERB and never treated as stopwords.
pub const COPULAS: [&str; 4] = ["is", "are", "was", "were"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Noun,
    Verb,
    Adj,
    Stop,
    Other,
}

impl FromStr for Tag {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NOUN" => Ok(Tag::Noun),
            "VERB" => Ok(Tag::Verb),
            "ADJ" => Ok(Tag::Adj),
            "STOP" => Ok(Tag::Stop),
            "OTHER" => Ok(Tag::Other),
            other => Err(LexiconError::UnknownTag(other.to_string())),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tag::Noun => "NOUN",
            Tag::Verb => "VERB",
            Tag::Adj => "ADJ",
            Tag::Stop => "STOP",
            Tag::Other => "OTHER",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosToken {
    pub surface: String,
    pub tag: Tag,
}

impl PosToken {
    pub fn is_content(&self) -> bool {
        self.tag != Tag::Stop
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("line {line}: expected `word<TAB>tag`")]
    BadLine { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that assigns exactly one tag per token.
pub trait Tagger {
    fn tag(&self, tokens: &[String]) -> Vec<PosToken>;
}

/// Word table, ordered suffix rules and stopword set.
#[derive(Debug, Clone)]
pub struct Lexicon {
    words: HashMap<String, Tag>,
    suffixes: Vec<(String, Tag)>,
    stopwords: HashSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::bundled()
    }
}

impl Lexicon {
    /// The lexicon shipped with this crate.
    pub fn bundled() -> Self {
        Self::from_sources(BUNDLED_LEXICON, BUNDLED_SUFFIXES, BUNDLED_STOPWORDS)
            .expect("bundled lexicon is well formed")
    }

    pub fn from_sources(words: &str, suffixes: &str, stopwords: &str) -> Result<Self, LexiconError> {
        let words = parse_table(words)?.into_iter().map(|(w, t)| (w.to_lowercase(), t)).collect();
        let suffixes = parse_table(suffixes)?;
        let stopwords = content_lines(stopwords)
            .map(|(_, l)| l.to_lowercase())
            .filter(|w| !COPULAS.contains(&w.as_str()))
            .collect();
        Ok(Lexicon { words, suffixes, stopwords })
    }

    /// Loads a word table from disk, keeping the bundled suffix rules and
    /// stopwords.
    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        let words = std::fs::read_to_string(path)?;
        Self::from_sources(&words, BUNDLED_SUFFIXES, BUNDLED_STOPWORDS)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(&token.to_lowercase())
    }

    pub fn tag_word(&self, token: &str) -> Tag {
        let lower = token.to_lowercase();
        if self.stopwords.contains(&lower) {
            return Tag::Stop;
        }
        if COPULAS.contains(&lower.as_str()) {
            return Tag::Verb;
        }
        if let Some(tag) = self.words.get(&lower) {
            return *tag;
        }
        let n = lower.chars().count();
        for (suffix, tag) in &self.suffixes {
            if n >= suffix.chars().count() + 2 && lower.ends_with(suffix.as_str()) {
                return *tag;
            }
        }
        Tag::Other
    }
}

impl Tagger for Lexicon {
    fn tag(&self, tokens: &[String]) -> Vec<PosToken> {
        tokens.iter().map(|t| PosToken { surface: t.clone(), tag: self.tag_word(t) }).collect()
    }
}

fn content_lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_table(src: &str) -> Result<Vec<(String, Tag)>, LexiconError> {
    content_lines(src)
        .map(|(line, l)| {
            let (word, tag) = l.split_once('\t').ok_or(LexiconError::BadLine { line })?;
            Ok((word.trim().to_string(), tag.trim().parse()?))
        })
        .collect()
}

/// Whitespace tokenization with leading and trailing ASCII punctuation split
/// off as one token per character. Inner hyphens and apostrophes stay.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let start = chars.iter().position(|c| !c.is_ascii_punctuation()).unwrap_or(chars.len());
        let end = chars.iter().rposition(|c| !c.is_ascii_punctuation()).map_or(start, |i| i + 1);
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(chars[end.max(start)..].iter().map(|c| c.to_string()));
    }
    out
}

pub fn pos_tag<T: Tagger + ?Sized>(tokens: &[String], tagger: &T) -> Vec<PosToken> {
    tagger.tag(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenizer_cases() {
        assert_eq!(
            tokenize("a baseball cap on a baby's head"),
            toks(&["a", "baseball", "cap", "on", "a", "baby's", "head"])
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("red, ball."), toks(&["red", ",", "ball", "."]));
        assert_eq!(tokenize("(well-known)..."), toks(&["(", "well-known", ")", ".", ".", "."]));
        assert_eq!(tokenize("!?"), toks(&["!", "?"]));
        assert_eq!(tokenize("Hello  World"), toks(&["Hello", "World"]));
    }

    #[test]
    fn tagging_cases() {
        let lex = Lexicon::bundled();
        let tags: Vec<Tag> =
            pos_tag(&toks(&["Man", "wearing", "a", "colorful", "shirt"]), &lex).into_iter().map(|p| p.tag).collect();
        assert_eq!(tags, vec![Tag::Noun, Tag::Verb, Tag::Stop, Tag::Adj, Tag::Noun]);
        assert_eq!(lex.tag_word("is"), Tag::Verb);
        assert_eq!(lex.tag_word("The"), Tag::Stop);
        assert_eq!(lex.tag_word("were"), Tag::Verb);
        assert!(!lex.is_stopword("are"));
    }

    #[test]
    fn suffix_fallback() {
        let lex = Lexicon::bundled();
        assert_eq!(lex.tag_word("zorbing"), Tag::Verb);
        assert_eq!(lex.tag_word("glorped"), Tag::Verb);
        assert_eq!(lex.tag_word("famous"), Tag::Adj);
        assert_eq!(lex.tag_word("widgets"), Tag::Noun);
        // too short for the -s rule
        assert_eq!(lex.tag_word("xs"), Tag::Other);
        assert_eq!(lex.tag_word("Aarhus"), Tag::Noun);
        assert_eq!(lex.tag_word("1988"), Tag::Other);
    }

    #[test]
    fn custom_sources() {
        let lex = Lexicon::from_sources("# header\nfoo\tADJ\n", "", "the\n").unwrap();
        assert_eq!(lex.tag_word("FOO"), Tag::Adj);
        assert_eq!(lex.tag_word("the"), Tag::Stop);
        assert_eq!(lex.tag_word("bar"), Tag::Other);
        assert!(matches!(Lexicon::from_sources("foo NOUN\n", "", ""), Err(LexiconError::BadLine { line: 1 })));
        assert!(matches!(Lexicon::from_sources("foo\tNN\n", "", ""), Err(LexiconError::UnknownTag(_))));
    }
}
