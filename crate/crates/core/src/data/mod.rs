//! Dataset ingestion, split construction and the JSONL interchange format.
//!
//! Raw WebNLG and Visual Genome parsing lives in the loader submodules;
//! everything downstream consumes [`Record`]s.

mod jsonl;
mod synth;
mod vg;
mod webnlg;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{serialize_unchecked, KnowledgeGraph, Modality, TokenSeq};
use crate::lingo::tokenize;
use crate::seeding::substream;

pub use jsonl::{pairs_from_records, read_jsonl, records_from_pairs, write_jsonl, Record};
pub use synth::{synth_corpus, SynthSpec};
pub use vg::{load_vg, parse_vg, regions_to_instances, RawObject, RawRegion, RawRelationship, RegionPairs};
pub use webnlg::{camel_to_words, clean_entity, load_webnlg, parse_webnlg_xml};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file or directory: {0}")]
    MissingFile(PathBuf),
    #[error("malformed record {id}: {reason}")]
    MalformedRecord { id: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl DataError {
    pub(crate) fn malformed(id: impl fmt::Display, reason: impl Into<String>) -> Self {
        DataError::MalformedRecord { id: id.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "dev" | "valid" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

/// One graph-text pair. `group` is the image id for scene-graph data and is
/// the granularity of the random split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub id: String,
    pub group: u64,
    pub split: Split,
    pub graph: KnowledgeGraph,
    pub text: String,
}

impl Pair {
    pub fn graph_seq(&self) -> TokenSeq {
        serialize_unchecked(&self.graph)
    }

    pub fn text_seq(&self) -> TokenSeq {
        TokenSeq::new(Modality::Text, tokenize(&self.text))
    }
}

/// A source with one or more references, ready for a conversion direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub split: Split,
    pub source: TokenSeq,
    pub references: Vec<TokenSeq>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "g2t")]
    GraphToText,
    #[serde(rename = "t2g")]
    TextToGraph,
}

impl Direction {
    pub fn source(self) -> Modality {
        match self {
            Direction::GraphToText => Modality::Graph,
            Direction::TextToGraph => Modality::Text,
        }
    }

    pub fn target(self) -> Modality {
        self.source().flip()
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::GraphToText => "g2t",
            Direction::TextToGraph => "t2g",
        })
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "g2t" => Ok(Direction::GraphToText),
            "t2g" => Ok(Direction::TextToGraph),
            _ => Err(format!("unknown direction {s:?}")),
        }
    }
}

/// Split outcome with the number of train pairs removed because their graph
/// also occurs in val or test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub pairs: Vec<Pair>,
    pub removed_from_train: usize,
}

/// Assigns splits by group (image) 80/10/10 under `seed`, then removes every
/// train pair whose graph serialization also occurs in val or test.
pub fn split_and_clean(mut pairs: Vec<Pair>, seed: u64) -> SplitResult {
    let mut groups: Vec<u64> = pairs.iter().map(|p| p.group).collect::<HashSet<_>>().into_iter().collect();
    groups.sort_unstable();
    groups.shuffle(&mut substream(seed, "split", 0));
    let n = groups.len();
    let n_val = (n as f64 * 0.1).round() as usize;
    let n_test = (n as f64 * 0.1).round() as usize;
    let n_train = n - n_val - n_test;
    let assignment: HashMap<u64, Split> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (*g, split)
        })
        .collect();
    for p in &mut pairs {
        p.split = assignment[&p.group];
    }
    let held_out: HashSet<String> =
        pairs.iter().filter(|p| p.split != Split::Train).map(|p| p.graph.serialization_key()).collect();
    let before = pairs.len();
    pairs.retain(|p| p.split != Split::Train || !held_out.contains(&p.graph.serialization_key()));
    SplitResult { removed_from_train: before - pairs.len(), pairs }
}

/// Groups pairs into multi-reference instances for one direction: by exact
/// graph serialization for g2t, by exact text for t2g. Grouping never crosses
/// splits. Instances and their references keep first-seen order.
pub fn unify_duplicates(pairs: &[Pair], direction: Direction) -> Vec<Instance> {
    let mut index: HashMap<(Split, String), usize> = HashMap::new();
    let mut out: Vec<Instance> = Vec::new();
    for p in pairs {
        let (key, source, reference) = match direction {
            Direction::GraphToText => (p.graph.serialization_key(), p.graph_seq(), p.text_seq()),
            Direction::TextToGraph => (p.text.clone(), p.text_seq(), p.graph_seq()),
        };
        match index.get(&(p.split, key.clone())) {
            Some(&i) => {
                if !out[i].references.contains(&reference) {
                    out[i].references.push(reference);
                }
            }
            None => {
                index.insert((p.split, key), out.len());
                out.push(Instance { id: p.id.clone(), split: p.split, source, references: vec![reference] });
            }
        }
    }
    out
}

/// True when some fact's subject or object has a final token ending in
/// "ball" (case-insensitive).
pub fn mentions_ball(graph: &KnowledgeGraph) -> bool {
    graph.facts.iter().any(|f| {
        [&f.subject, &f.object]
            .into_iter()
            .any(|label| label.split_whitespace().last().is_some_and(|t| t.to_lowercase().ends_with("ball")))
    })
}

/// Keeps every pair of every group (image) in which at least one graph
/// mentions a ball. Split assignments are untouched.
pub fn vg_ball_filter(pairs: &[Pair]) -> Vec<Pair> {
    let groups: HashSet<u64> = pairs.iter().filter(|p| mentions_ball(&p.graph)).map(|p| p.group).collect();
    pairs.iter().filter(|p| groups.contains(&p.group)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub relation_types: usize,
    pub avg_facts: f64,
    pub avg_text_tokens: f64,
    pub pct_text_tokens_in_graph: f64,
    pub pct_graph_tokens_in_text: f64,
}

fn pct_covered(tokens: &[String], other: &HashSet<String>) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    100.0 * tokens.iter().filter(|t| other.contains(*t)).count() as f64 / tokens.len() as f64
}

/// Split sizes, relation inventory and token-overlap statistics. Overlaps
/// are computed per pair on lowercased tokens and averaged over pairs.
pub fn corpus_stats(pairs: &[Pair]) -> CorpusStats {
    let count = |s: Split| pairs.iter().filter(|p| p.split == s).count();
    let relations: HashSet<&str> =
        pairs.iter().flat_map(|p| p.graph.facts.iter().map(|f| f.predicate.as_str())).collect();
    let n = pairs.len().max(1) as f64;
    let mut sums = [0.0f64; 4];
    for p in pairs {
        let text: Vec<String> = tokenize(&p.text).iter().map(|t| t.to_lowercase()).collect();
        let graph: Vec<String> = p
            .graph
            .facts
            .iter()
            .flat_map(|f| f.fields().map(str::to_string))
            .flat_map(|l| l.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
            .collect();
        let text_set: HashSet<String> = text.iter().cloned().collect();
        let graph_set: HashSet<String> = graph.iter().cloned().collect();
        sums[0] += p.graph.len() as f64;
        sums[1] += text.len() as f64;
        sums[2] += pct_covered(&text, &graph_set);
        sums[3] += pct_covered(&graph, &text_set);
    }
    CorpusStats {
        train: count(Split::Train),
        val: count(Split::Val),
        test: count(Split::Test),
        relation_types: relations.len(),
        avg_facts: sums[0] / n,
        avg_text_tokens: sums[1] / n,
        pct_text_tokens_in_graph: sums[2] / n,
        pct_graph_tokens_in_text: sums[3] / n,
    }
}
