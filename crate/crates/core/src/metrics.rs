//! Multi-reference corpus metrics: BLEU-4, chrF++ and micro-averaged fact F1.
//!
//! Each metric reduces a corpus to additive count statistics first, so shards
//! can be scored independently and merged by summation.

use std::collections::{HashMap, HashSet};
use std::ops::{Add, AddAssign};

use serde::Serialize;
use thiserror::Error;

use crate::kg::{Fact, KnowledgeGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("instance {0} has no references")]
    NoReferences(usize),
}

/// A prediction with one or more references of the same kind.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInstance<T> {
    pub prediction: T,
    pub references: Vec<T>,
}

impl<T> EvalInstance<T> {
    pub fn new(prediction: T, references: Vec<T>) -> Self {
        EvalInstance { prediction, references }
    }
}

fn check<T>(corpus: &[EvalInstance<T>]) -> Result<(), MetricError> {
    if corpus.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    match corpus.iter().position(|i| i.references.is_empty()) {
        Some(i) => Err(MetricError::NoReferences(i)),
        None => Ok(()),
    }
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

// ---------------------------------------------------------------- BLEU

pub const BLEU_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; BLEU_ORDER],
    pub totals: [usize; BLEU_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..BLEU_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

impl Add for BleuStats {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl BleuStats {
    /// Clipped n-gram counts of one lowercased hypothesis against its
    /// references. The clip for each n-gram is its maximum count in any
    /// single reference; the reference length is the one closest to the
    /// hypothesis length (shorter on ties).
    pub fn sentence<S: AsRef<str>>(hyp: &[S], refs: &[Vec<S>]) -> Self {
        let lower = |t: &[S]| t.iter().map(|w| w.as_ref().to_lowercase()).collect::<Vec<_>>();
        let hyp = lower(hyp);
        let refs: Vec<Vec<String>> = refs.iter().map(|r| lower(r)).collect();
        let mut s = BleuStats { hyp_len: hyp.len(), ..Default::default() };
        s.ref_len = refs.iter().map(Vec::len).min_by_key(|&r| (r.abs_diff(hyp.len()), r)).unwrap_or(0);
        for n in 1..=BLEU_ORDER {
            let hyp_counts = ngram_counts(&hyp, n);
            let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
            for r in &refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
            s.matches[n - 1] = hyp_counts.iter().map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    /// Modified n-gram precisions. Orders above one with no match use
    /// add-one smoothing `1 / (total + 1)`; unigram precision is never
    /// smoothed.
    pub fn precisions(&self) -> [f64; BLEU_ORDER] {
        std::array::from_fn(|n| {
            if n > 0 && self.matches[n] == 0 {
                1.0 / (self.totals[n] as f64 + 1.0)
            } else if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            }
        })
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    pub fn score(&self) -> f64 {
        let p = self.precisions();
        if p[0] == 0.0 {
            return 0.0;
        }
        let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / BLEU_ORDER as f64;
        100.0 * self.brevity_penalty() * log_mean.exp()
    }
}

/// Corpus-level BLEU-4 in `[0, 100]`. Tokens are lowercased before
/// counting.
pub fn bleu<S: AsRef<str>>(corpus: &[EvalInstance<Vec<S>>]) -> Result<f64, MetricError> {
    check(corpus)?;
    let stats =
        corpus.iter().map(|i| BleuStats::sentence(&i.prediction, &i.references)).fold(BleuStats::default(), Add::add);
    Ok(stats.score())
}

// ---------------------------------------------------------------- chrF++

pub const CHRF_CHAR_ORDER: usize = 6;
pub const CHRF_WORD_ORDER: usize = 2;
pub const CHRF_BETA: f64 = 2.0;
const CHRF_ORDERS: usize = CHRF_CHAR_ORDER + CHRF_WORD_ORDER;

/// Per-order `(matches, hypothesis n-grams, reference n-grams)`; character
/// orders first, then word orders.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChrfStats {
    pub orders: [[usize; 3]; CHRF_ORDERS],
}

impl AddAssign for ChrfStats {
    fn add_assign(&mut self, o: Self) {
        for (a, b) in self.orders.iter_mut().zip(o.orders) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }
}

impl Add for ChrfStats {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

fn overlap<K: std::hash::Hash + Eq>(h: &HashMap<K, usize>, r: &HashMap<K, usize>) -> [usize; 3] {
    let m = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
    [m, h.values().sum(), r.values().sum()]
}

impl ChrfStats {
    /// Character n-grams ignore whitespace; word n-grams split on it.
    pub fn pair(hyp: &str, reference: &str) -> Self {
        let chars = |s: &str| s.chars().filter(|c| !c.is_whitespace()).map(String::from).collect::<Vec<_>>();
        let words = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let (hc, rc, hw, rw) = (chars(hyp), chars(reference), words(hyp), words(reference));
        let mut s = ChrfStats::default();
        for n in 1..=CHRF_CHAR_ORDER {
            s.orders[n - 1] = overlap(&ngram_counts(&hc, n), &ngram_counts(&rc, n));
        }
        for n in 1..=CHRF_WORD_ORDER {
            s.orders[CHRF_CHAR_ORDER + n - 1] = overlap(&ngram_counts(&hw, n), &ngram_counts(&rw, n));
        }
        s
    }

    /// Average precision and recall over the orders that have any n-gram on
    /// either side, then F-beta with beta = 2, scaled to `[0, 100]`.
    pub fn score(&self) -> f64 {
        let active: Vec<_> = self.orders.iter().filter(|o| o[1] + o[2] > 0).collect();
        if active.is_empty() {
            return 100.0;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let k = active.len() as f64;
        let p = active.iter().map(|o| ratio(o[0], o[1])).sum::<f64>() / k;
        let r = active.iter().map(|o| ratio(o[0], o[2])).sum::<f64>() / k;
        let b2 = CHRF_BETA * CHRF_BETA;
        if p + r == 0.0 {
            0.0
        } else {
            100.0 * (1.0 + b2) * p * r / (b2 * p + r)
        }
    }
}

/// Corpus-level chrF++ over raw strings. For several references the one
/// with the best sentence-level score contributes its statistics (first
/// wins ties).
pub fn chrf_pp<S: AsRef<str>>(corpus: &[EvalInstance<S>]) -> Result<f64, MetricError> {
    check(corpus)?;
    let mut total = ChrfStats::default();
    for inst in corpus {
        let best = inst
            .references
            .iter()
            .map(|r| ChrfStats::pair(inst.prediction.as_ref(), r.as_ref()))
            .fold(None::<ChrfStats>, |best, s| match best {
                Some(b) if b.score() >= s.score() => Some(b),
                _ => Some(s),
            })
            .expect("checked non-empty");
        total += best;
    }
    Ok(total.score())
}

// ---------------------------------------------------------------- fact F1

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FactStats {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl AddAssign for FactStats {
    fn add_assign(&mut self, o: Self) {
        self.true_positives += o.true_positives;
        self.predicted += o.predicted;
        self.gold += o.gold;
    }
}

impl Add for FactStats {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl FactStats {
    /// Predicted facts count once each; a fact is correct if any reference
    /// holds it; the gold count is the largest reference's fact count.
    /// Matching is exact after lowercasing.
    pub fn instance(prediction: &KnowledgeGraph, references: &[KnowledgeGraph]) -> Self {
        let norm = |g: &KnowledgeGraph| g.facts.iter().map(Fact::lowercased).collect::<HashSet<_>>();
        let pred = norm(prediction);
        let refs: Vec<HashSet<Fact>> = references.iter().map(norm).collect();
        FactStats {
            true_positives: pred.iter().filter(|f| refs.iter().any(|r| r.contains(*f))).count(),
            predicted: pred.len(),
            gold: refs.iter().map(HashSet::len).max().unwrap_or(0),
        }
    }

    pub fn prf(&self) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.true_positives, self.predicted);
        let recall = ratio(self.true_positives, self.gold);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f1 }
    }
}

/// Micro-averaged fact precision, recall and F1.
pub fn fact_f1(corpus: &[EvalInstance<KnowledgeGraph>]) -> Result<Prf, MetricError> {
    check(corpus)?;
    Ok(corpus
        .iter()
        .map(|i| FactStats::instance(&i.prediction, &i.references))
        .fold(FactStats::default(), Add::add)
        .prf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn g(facts: &[(&str, &str, &str)]) -> KnowledgeGraph {
        facts.iter().map(|(s, p, o)| Fact::new(s, p, o)).collect()
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let c = vec![EvalInstance::new(w("the dog chases a red ball"), vec![w("the dog chases a red ball")])];
        assert!((bleu(&c).unwrap() - 100.0).abs() < 1e-9);
        let c = vec![EvalInstance::new(w("x y z"), vec![w("a b c")])];
        assert_eq!(bleu(&c).unwrap(), 0.0);
        let c = vec![EvalInstance::new(w("A b"), vec![w("a B")])];
        assert!((bleu(&c).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(bleu::<String>(&[]), Err(MetricError::EmptyCorpus));
        assert_eq!(bleu(&[EvalInstance::new(w("a"), vec![])]), Err(MetricError::NoReferences(0)));
    }

    #[test]
    fn bleu_hand_counts() {
        let s = BleuStats::sentence(&w("a b c d"), &[w("a b c e")]);
        assert_eq!(s.matches, [3, 2, 1, 0]);
        assert_eq!(s.totals, [4, 3, 2, 1]);
        let expected = 100.0 * (0.75f64 * (2.0 / 3.0) * 0.5 * 0.5).powf(0.25);
        assert!((s.score() - expected).abs() < 1e-4);
        assert!((s.score() - 59.4604).abs() < 1e-4);
    }

    #[test]
    fn bleu_reference_choice() {
        // clip is the max over references: "the the" is fully matched by ref 2
        let s = BleuStats::sentence(&w("the the cat"), &[w("the cat"), w("the the dog")]);
        assert_eq!(s.matches[0], 3);
        // closest length: 3 vs {2, 3} -> 3
        assert_eq!(s.ref_len, 3);
        // tie between 2 and 4 picks 2
        assert_eq!(BleuStats::sentence(&w("a b c"), &[w("a b c d"), w("a b")]).ref_len, 2);
    }

    #[test]
    fn chrf_basics() {
        let c = vec![EvalInstance::new("a red ball", vec!["a red ball"])];
        assert!((chrf_pp(&c).unwrap() - 100.0).abs() < 1e-9);
        let c = vec![EvalInstance::new("abc", vec!["xyz"])];
        assert_eq!(chrf_pp(&c).unwrap(), 0.0);
        let c = vec![EvalInstance::new("abc", vec!["xyz", "abc"])];
        assert!((chrf_pp(&c).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn fact_f1_cases() {
        let c = vec![EvalInstance::new(g(&[("a", "r", "b")]), vec![g(&[("a", "r", "b"), ("c", "r", "d")])])];
        let prf = fact_f1(&c).unwrap();
        assert_eq!((prf.precision, prf.recall), (1.0, 0.5));
        assert_eq!(prf.f1, 2.0 / 3.0);

        let c = vec![EvalInstance::new(KnowledgeGraph::default(), vec![g(&[("a", "r", "b")])])];
        let prf = fact_f1(&c).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (0.0, 0.0, 0.0));

        let r1 = g(&[("a", "r", "b"), ("c", "r", "d")]);
        let r2 = g(&[("x", "r", "y"), ("c", "r", "d")]);
        let c = vec![EvalInstance::new(r2.clone(), vec![r1, r2])];
        let prf = fact_f1(&c).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn fact_f1_set_semantics_and_case() {
        let pred = g(&[("Man", "wearing", "shirt"), ("man", "wearing", "shirt"), ("x", "y", "z")]);
        let s = FactStats::instance(&pred, &[g(&[("man", "wearing", "shirt")])]);
        assert_eq!(s, FactStats { true_positives: 1, predicted: 2, gold: 1 });
    }
}
