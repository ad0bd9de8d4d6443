//! Seeded synthetic graph-text corpus for desk-scale experiments.
//!
//! Graphs hold one or two relation facts between entities plus attribute
//! facts on those entities (or a single attribute fact on its own). Texts
//! come from fixed templates:
//!
//! * relation: `DET [ADJ] SUBJ VERB DET [ADJ] OBJ`
//! * lone attribute: `DET NOUN is ADJ`
//!
//! clauses joined by "and". Determiners vary between "the" and "a", and an
//! attribute is written in front of the first mention of its entity.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Pair, Split};
use crate::kg::{Fact, KnowledgeGraph, ATTR};
use crate::seeding::substream;

const ENTITIES: [&str; 16] = [
    "dog", "cat", "horse", "bird", "man", "woman", "boy", "girl", "ball", "kite", "box", "hat", "car", "fox", "owl",
    "frog",
];
const RELATIONS: [&str; 12] = [
    "chases", "watches", "follows", "likes", "kicks", "holds", "pulls", "pushes", "carries", "catches", "sees", "hits",
];
const ATTRIBUTES: [&str; 12] =
    ["red", "blue", "green", "small", "big", "old", "young", "happy", "lazy", "shiny", "tiny", "brown"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_attributes: usize,
    pub n_instances: usize,
    pub min_facts: usize,
    pub max_facts: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { n_entities: 12, n_relations: 8, n_attributes: 8, n_instances: 500, min_facts: 1, max_facts: 3 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_entities < 4 || self.n_entities > ENTITIES.len() {
            return Err(format!("n_entities must be in 4..={}", ENTITIES.len()));
        }
        if self.n_relations == 0 || self.n_relations > RELATIONS.len() {
            return Err(format!("n_relations must be in 1..={}", RELATIONS.len()));
        }
        if self.n_attributes == 0 || self.n_attributes > ATTRIBUTES.len() {
            return Err(format!("n_attributes must be in 1..={}", ATTRIBUTES.len()));
        }
        if self.min_facts == 0 || self.min_facts > self.max_facts || self.max_facts > 3 {
            return Err("fact range must satisfy 1 <= min <= max <= 3".into());
        }
        Ok(())
    }
}

fn det<R: Rng>(rng: &mut R) -> &'static str {
    if rng.gen_bool(0.5) {
        "the"
    } else {
        "a"
    }
}

/// Builds one graph with `n` facts and its verbalization.
fn generate<R: Rng>(spec: &SynthSpec, n: usize, rng: &mut R) -> (KnowledgeGraph, String) {
    let entities = &ENTITIES[..spec.n_entities];
    let relations = &RELATIONS[..spec.n_relations];
    let attributes = &ATTRIBUTES[..spec.n_attributes];

    let n_rel = if n == 1 { usize::from(rng.gen_bool(0.5)) } else { rng.gen_range(1..=n.min(2)) };
    if n_rel == 0 {
        let e = *entities.choose(rng).unwrap();
        let a = *attributes.choose(rng).unwrap();
        let text = format!("{} {e} is {a}", det(rng));
        return (KnowledgeGraph::new(vec![Fact::new(e, ATTR, a)]), text);
    }

    let mut picked: Vec<&str> = entities.choose_multiple(rng, 4).copied().collect();
    picked.shuffle(rng);
    let mut rel_facts = vec![(picked[0], *relations.choose(rng).unwrap(), picked[1])];
    if n_rel == 2 {
        // chain through the first object or start a fresh pair
        let subj = if rng.gen_bool(0.5) { picked[1] } else { picked[2] };
        rel_facts.push((subj, *relations.choose(rng).unwrap(), picked[3]));
    }

    // mention order of entities across the clauses
    let mut mentions: Vec<&str> = Vec::new();
    for (s, _, o) in &rel_facts {
        for e in [*s, *o] {
            if !mentions.contains(&e) {
                mentions.push(e);
            }
        }
    }
    let n_attr = n - n_rel;
    let mut attr_of: Vec<(&str, &str)> =
        mentions.choose_multiple(rng, n_attr).map(|e| (*e, *attributes.choose(rng).unwrap())).collect();
    attr_of.sort_by_key(|(e, _)| mentions.iter().position(|m| m == e));

    let mut described: Vec<&'static str> = Vec::new();
    let mut mention = |e: &'static str, rng: &mut R| -> String {
        let d = det(rng);
        let adj = attr_of.iter().find(|(x, _)| *x == e && !described.contains(&e)).map(|(_, a)| *a);
        described.push(e);
        match adj {
            Some(a) => format!("{d} {a} {e}"),
            None => format!("{d} {e}"),
        }
    };
    let clauses: Vec<String> = rel_facts
        .iter()
        .map(|(s, p, o)| {
            let subj = mention(s, rng);
            let obj = mention(o, rng);
            format!("{subj} {p} {obj}")
        })
        .collect();

    let mut facts: Vec<Fact> = rel_facts.iter().map(|(s, p, o)| Fact::new(s, p, o)).collect();
    facts.extend(attr_of.iter().map(|(e, a)| Fact::new(e, ATTR, a)));
    (KnowledgeGraph::new(facts), clauses.join(" and "))
}

/// Generates `spec.n_instances` pairs. Each pair is its own split group;
/// splits are assigned 80/10/10 over a seeded shuffle of instances.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Vec<Pair> {
    let mut rng = substream(seed, "synth", 0);
    let mut pairs: Vec<Pair> = (0..spec.n_instances)
        .map(|i| {
            let n = rng.gen_range(spec.min_facts..=spec.max_facts);
            let (graph, text) = generate(spec, n, &mut rng);
            Pair { id: format!("synth-{i}"), group: i as u64, split: Split::Train, graph, text }
        })
        .collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut substream(seed, "synth-split", 0));
    let n = pairs.len();
    let n_val = (n as f64 * 0.1).round() as usize;
    let n_test = (n as f64 * 0.1).round() as usize;
    for (rank, &i) in order.iter().enumerate() {
        pairs[i].split = if rank < n - n_val - n_test {
            Split::Train
        } else if rank < n - n_test {
            Split::Val
        } else {
            Split::Test
        };
    }
    pairs
}
