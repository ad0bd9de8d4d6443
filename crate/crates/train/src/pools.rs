use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use kgtext_core::data::Pair;
use kgtext_core::TokenSeq;

/// Gold `(graph, text)` pairs behind a read counter, so unsupervised runs
/// can prove they never looked.
#[derive(Debug, Default)]
pub struct SupervisedPool {
    pairs: Vec<(TokenSeq, TokenSeq)>,
    reads: AtomicUsize,
}

impl SupervisedPool {
    pub fn new(pairs: Vec<(TokenSeq, TokenSeq)>) -> Self {
        SupervisedPool { pairs, reads: AtomicUsize::new(0) }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(TokenSeq, TokenSeq)] {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.pairs
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }
}

/// Unlabeled graph and text pools plus the optional supervised pool.
#[derive(Debug, Default)]
pub struct CorpusPools {
    pub graphs: Vec<TokenSeq>,
    pub texts: Vec<TokenSeq>,
    pub supervised: SupervisedPool,
    /// Pairs whose graph or text tokenized to nothing.
    pub skipped_empty: usize,
}

impl CorpusPools {
    /// Graph and text pools from (training) pairs, each deduplicated in
    /// first-seen order. The pairing itself is only kept in the supervised
    /// pool.
    pub fn from_pairs(pairs: &[Pair]) -> Self {
        let mut seen_g = HashSet::new();
        let mut seen_t = HashSet::new();
        let mut pools = CorpusPools::default();
        let mut gold = Vec::new();
        for p in pairs {
            let (g, t) = (p.graph_seq(), p.text_seq());
            if g.is_empty() || t.is_empty() {
                pools.skipped_empty += 1;
                continue;
            }
            if seen_g.insert(g.tokens.clone()) {
                pools.graphs.push(g.clone());
            }
            if seen_t.insert(t.tokens.clone()) {
                pools.texts.push(t.clone());
            }
            gold.push((g, t));
        }
        pools.supervised = SupervisedPool::new(gold);
        pools
    }

    /// Every token sequence in the unlabeled pools, for vocabulary building.
    pub fn sequences(&self) -> impl Iterator<Item = &[String]> {
        self.graphs.iter().chain(&self.texts).map(|s| s.tokens.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgtext_core::data::Split;
    use kgtext_core::{Fact, KnowledgeGraph};

    fn pair(id: &str, g: &[(&str, &str, &str)], text: &str) -> Pair {
        Pair {
            id: id.into(),
            group: 0,
            split: Split::Train,
            graph: KnowledgeGraph::new(g.iter().map(|(s, p, o)| Fact::new(s, p, o)).collect()),
            text: text.into(),
        }
    }

    #[test]
    fn dedup_and_counter() {
        let pairs = vec![
            pair("1", &[("a", "r", "b")], "a r b"),
            pair("2", &[("a", "r", "b")], "a relates to b"),
            pair("3", &[], "nothing"),
        ];
        let pools = CorpusPools::from_pairs(&pairs);
        assert_eq!(pools.graphs.len(), 1);
        assert_eq!(pools.texts.len(), 2);
        assert_eq!(pools.skipped_empty, 1);
        assert_eq!(pools.supervised.reads(), 0);
        assert_eq!(pools.supervised.pairs().len(), 2);
        assert_eq!(pools.supervised.reads(), 1);
        assert_eq!(pools.sequences().count(), 3);
    }
}
