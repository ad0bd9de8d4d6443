//! Deterministic bootstrap converters between graphs and text.

use std::collections::HashSet;

use crate::kg::{Fact, KnowledgeGraph, Modality, TokenSeq, ATTR, EOF, SEP};
use crate::lingo::{pos_tag, tokenize, Tag, Tagger, COPULAS};

/// Graph-to-text by token rewriting: `SEP` is deleted, `EOF` becomes "and",
/// and `attr` in predicate position becomes "is".
pub fn rule_g2t<S: AsRef<str>>(graph_tokens: &[S]) -> TokenSeq {
    let mut out = Vec::with_capacity(graph_tokens.len());
    // 0 = subject, 1 = predicate, 2+ = object
    let mut slot = 0usize;
    for tok in graph_tokens {
        match tok.as_ref() {
            SEP => slot += 1,
            EOF => {
                out.push("and".to_string());
                slot = 0;
            }
            ATTR if slot == 1 => out.push("is".to_string()),
            t => out.push(t.to_string()),
        }
    }
    TokenSeq::new(Modality::Text, out)
}

/// Text-to-graph with two heuristics over the stopword-filtered tagged text:
/// every verb links its neighbouring content words (copulas yield `attr`),
/// and every adjective attaches to the first noun after it.
///
/// Facts come out ordered by the text position of the word that triggered
/// them, with duplicates removed.
pub fn rule_t2g<T: Tagger + ?Sized>(text: &str, tagger: &T) -> KnowledgeGraph {
    let tokens = tokenize(text);
    rule_t2g_tokens(&tokens, tagger)
}

pub fn rule_t2g_tokens<T: Tagger + ?Sized>(tokens: &[String], tagger: &T) -> KnowledgeGraph {
    let content: Vec<_> = pos_tag(tokens, tagger).into_iter().filter(|p| p.is_content()).collect();

    let mut anchored: Vec<(usize, Fact)> = Vec::new();
    for (i, tok) in content.iter().enumerate() {
        match tok.tag {
            Tag::Verb if i > 0 && i + 1 < content.len() => {
                let pred =
                    if COPULAS.contains(&tok.surface.to_lowercase().as_str()) { ATTR } else { tok.surface.as_str() };
                anchored.push((i, Fact::new(&content[i - 1].surface, pred, &content[i + 1].surface)));
            }
            Tag::Adj => {
                if let Some(noun) = content[i + 1..].iter().find(|p| p.tag == Tag::Noun) {
                    anchored.push((i, Fact::new(&noun.surface, ATTR, &tok.surface)));
                }
            }
            _ => {}
        }
    }
    // a verb and an adjective never share a position, so the sort is total
    anchored.sort_by_key(|(pos, _)| *pos);

    let mut seen = HashSet::new();
    anchored.into_iter().map(|(_, f)| f).filter(|f| seen.insert(f.clone())).collect()
}
