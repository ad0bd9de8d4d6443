//! Knowledge-graph data model and the linear token serialization.
//!
//! A graph is an ordered list of `(subject, predicate, object)` facts. It is
//! serialized by writing each fact as `subject SEP predicate SEP object` and
//! joining facts with `EOF`. Labels are whitespace tokenized, so a multi-word
//! label such as `wrapped in blanket` occupies several tokens inside one slot.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEP: &str = "SEP";
pub const EOF: &str = "EOF";
pub const BLANKED: &str = "BLANKED";
/// Reserved predicate linking an object to one of its attributes.
pub const ATTR: &str = "attr";

/// Returns true for the three structural tokens of the serialization.
pub fn is_reserved(token: &str) -> bool {
    token == SEP || token == EOF || token == BLANKED
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KgError {
    #[error("label {label:?} contains reserved token {token}")]
    ReservedTokenInLabel { label: String, token: String },
    #[error("fact has an empty {0}")]
    EmptyField(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Graph,
}

impl Modality {
    pub fn flip(self) -> Self {
        match self {
            Modality::Text => Modality::Graph,
            Modality::Graph => Modality::Text,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Text => f.write_str("text"),
            Modality::Graph => f.write_str("graph"),
        }
    }
}

/// One subject-predicate-object assertion. Fields hold whitespace-normalized
/// labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fact {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Fact {
    /// Builds a fact, collapsing runs of whitespace inside each label.
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        Fact {
            subject: normalize_label(subject),
            predicate: normalize_label(predicate),
            object: normalize_label(object),
        }
    }

    pub fn fields(&self) -> [&str; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn validate(&self) -> Result<(), KgError> {
        for (name, label) in ["subject", "predicate", "object"].into_iter().zip(self.fields()) {
            if label.split_whitespace().next().is_none() {
                return Err(KgError::EmptyField(name));
            }
            if let Some(tok) = label.split_whitespace().find(|t| is_reserved(t)) {
                return Err(KgError::ReservedTokenInLabel { label: label.to_string(), token: tok.to_string() });
            }
        }
        Ok(())
    }

    pub fn lowercased(&self) -> Fact {
        Fact {
            subject: self.subject.to_lowercase(),
            predicate: self.predicate.to_lowercase(),
            object: self.object.to_lowercase(),
        }
    }

    /// Serialized tokens of this fact alone, without any `EOF`.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, label) in self.fields().into_iter().enumerate() {
            if i > 0 {
                out.push(SEP.to_string());
            }
            out.extend(label.split_whitespace().map(str::to_string));
        }
        out
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ordered fact list. Order is the dataset's stored order and is kept by
/// serialization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnowledgeGraph {
    pub facts: Vec<Fact>,
}

impl KnowledgeGraph {
    pub fn new(facts: Vec<Fact>) -> Self {
        KnowledgeGraph { facts }
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn validate(&self) -> Result<(), KgError> {
        self.facts.iter().try_for_each(Fact::validate)
    }

    /// Node labels: all subjects and objects, first-seen order, deduplicated.
    pub fn nodes(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for f in &self.facts {
            for n in [f.subject.as_str(), f.object.as_str()] {
                if seen.insert(n) {
                    out.push(n);
                }
            }
        }
        out
    }

    /// Edges as `(source, label, target)` node indices into [`Self::nodes`].
    pub fn edges(&self) -> Vec<(usize, &str, usize)> {
        let nodes = self.nodes();
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        self.facts.iter().map(|f| (index[f.subject.as_str()], f.predicate.as_str(), index[f.object.as_str()])).collect()
    }

    /// Serialization string (tokens joined by single spaces). Used as the
    /// grouping key for duplicate detection.
    pub fn serialization_key(&self) -> String {
        self.facts.iter().map(|f| f.tokens().join(" ")).collect::<Vec<_>>().join(&format!(" {EOF} "))
    }
}

impl FromIterator<Fact> for KnowledgeGraph {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        KnowledgeGraph { facts: iter.into_iter().collect() }
    }
}

/// A token sequence tagged with its modality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    pub modality: Modality,
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn new(modality: Modality, tokens: Vec<String>) -> Self {
        TokenSeq { modality, tokens }
    }

    pub fn text<S: AsRef<str>>(tokens: &[S]) -> Self {
        TokenSeq::new(Modality::Text, tokens.iter().map(|t| t.as_ref().to_string()).collect())
    }

    /// Whitespace split of `s` with the given modality.
    pub fn parse(modality: Modality, s: &str) -> Self {
        TokenSeq::new(modality, s.split_whitespace().map(str::to_string).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_string(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_string())
    }
}

/// Writes out `g` as a GRAPH token sequence. No trailing `EOF`.
pub fn serialize(g: &KnowledgeGraph) -> Result<TokenSeq, KgError> {
    g.validate()?;
    Ok(serialize_unchecked(g))
}

/// Serialization without label validation, for noisy intermediate
/// graphs that may hold `BLANKED` placeholders.
pub fn serialize_unchecked(g: &KnowledgeGraph) -> TokenSeq {
    let mut tokens = Vec::new();
    for (i, f) in g.facts.iter().enumerate() {
        if i > 0 {
            tokens.push(EOF.to_string());
        }
        tokens.extend(f.tokens());
    }
    TokenSeq::new(Modality::Graph, tokens)
}

/// Result of lenient deserialization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Parsed {
    pub graph: KnowledgeGraph,
    pub malformed: usize,
}

/// Splits the token list on `EOF`, then on `SEP`. Segments that do not have
/// exactly three non-empty, blank-free parts are dropped and counted.
/// Never fails: model outputs are expected to be noisy.
pub fn deserialize<S: AsRef<str>>(tokens: &[S]) -> Parsed {
    let mut out = Parsed::default();
    if tokens.is_empty() {
        return out;
    }
    for segment in tokens.split(|t| t.as_ref() == EOF) {
        match parse_fact(segment) {
            Some(f) => out.graph.facts.push(f),
            None => out.malformed += 1,
        }
    }
    out
}

fn parse_fact<S: AsRef<str>>(segment: &[S]) -> Option<Fact> {
    let parts: Vec<&[S]> = segment.split(|t| t.as_ref() == SEP).collect();
    if parts.len() != 3 {
        return None;
    }
    let mut labels = Vec::with_capacity(3);
    for part in parts {
        if part.is_empty() || part.iter().any(|t| t.as_ref() == BLANKED) {
            return None;
        }
        labels.push(part.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" "));
    }
    Some(Fact { subject: labels.remove(0), predicate: labels.remove(0), object: labels.remove(0) })
}

/// True iff both graphs hold the same facts with the same multiplicities.
pub fn fact_multiset_equal(a: &KnowledgeGraph, b: &KnowledgeGraph) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut counts: HashMap<&Fact, i64> = HashMap::new();
    for f in &a.facts {
        *counts.entry(f).or_default() += 1;
    }
    for f in &b.facts {
        match counts.get_mut(f) {
            Some(c) if *c > 0 => *c -= 1,
            _ => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(facts: &[(&str, &str, &str)]) -> KnowledgeGraph {
        facts.iter().map(|(s, p, o)| Fact::new(s, p, o)).collect()
    }

    pub(crate) fn baby_in_hat() -> KnowledgeGraph {
        g(&[
            ("baby", "attr", "small"),
            ("baby", "attr", "wrapped in blanket"),
            ("hat", "attr", "pink"),
            ("hat", "attr", "baseball hat"),
            ("baby", "wearing", "hat"),
        ])
    }

    #[test]
    fn single_fact() {
        let s = serialize(&g(&[("hat", "attr", "pink")])).unwrap();
        assert_eq!(s.as_string(), "hat SEP attr SEP pink");
        assert_eq!(s.modality, Modality::Graph);
    }

    #[test]
    fn baby_in_hat_graph() {
        let s = serialize(&baby_in_hat()).unwrap();
        assert_eq!(
            s.as_string(),
            "baby SEP attr SEP small EOF baby SEP attr SEP wrapped in blanket EOF hat SEP attr SEP pink \
             EOF hat SEP attr SEP baseball hat EOF baby SEP wearing SEP hat"
        );
        assert_eq!(s.as_string(), baby_in_hat().serialization_key());
    }

    #[test]
    fn empty_graph() {
        assert!(serialize(&KnowledgeGraph::default()).unwrap().is_empty());
        assert_eq!(deserialize::<&str>(&[]), Parsed::default());
    }

    #[test]
    fn reserved_label_rejected() {
        let err = serialize(&g(&[("a SEP", "r", "b")])).unwrap_err();
        assert!(matches!(err, KgError::ReservedTokenInLabel { .. }));
        assert!(serialize(&g(&[("a", "r", "BLANKED")])).is_err());
        assert!(matches!(serialize(&g(&[("a", " ", "b")])), Err(KgError::EmptyField("predicate"))));
    }

    #[test]
    fn lenient_parse() {
        let p = deserialize(&TokenSeq::parse(Modality::Graph, "a SEP r SEP b EOF c SEP r2 SEP d").tokens);
        assert_eq!(p.graph, g(&[("a", "r", "b"), ("c", "r2", "d")]));
        assert_eq!(p.malformed, 0);

        let p = deserialize(&TokenSeq::parse(Modality::Graph, "a SEP r SEP b EOF BLANKED").tokens);
        assert_eq!((p.graph.len(), p.malformed), (1, 1));

        let p = deserialize(&["a", "SEP", "b"]);
        assert_eq!((p.graph.len(), p.malformed), (0, 1));

        let p = deserialize(&["a", "SEP", "SEP", "b", "EOF", "EOF"]);
        assert_eq!((p.graph.len(), p.malformed), (0, 3));
    }

    #[test]
    fn multiset_equality() {
        let ab = g(&[("a", "r", "b"), ("c", "r", "d")]);
        let ba = g(&[("c", "r", "d"), ("a", "r", "b")]);
        assert!(fact_multiset_equal(&ab, &ba));
        assert!(!fact_multiset_equal(&g(&[("a", "r", "b")]), &g(&[("a", "r", "b"), ("a", "r", "b")])));
        assert!(fact_multiset_equal(&KnowledgeGraph::default(), &KnowledgeGraph::default()));
        assert!(!fact_multiset_equal(&g(&[("a", "r", "b"), ("a", "r", "b")]), &g(&[("a", "r", "b"), ("c", "r", "d")])));
    }

    #[test]
    fn node_and_edge_views() {
        let graph = baby_in_hat();
        assert_eq!(graph.nodes(), vec!["baby", "small", "wrapped in blanket", "hat", "pink", "baseball hat"]);
        let edges = graph.edges();
        assert_eq!(edges.len(), 5);
        assert_eq!(edges[4], (0, "wearing", 3));
    }
}
