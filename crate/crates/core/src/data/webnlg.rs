//! WebNLG XML loader. Expects a local copy of the release laid out with
//! `train`, `dev` and `test` directories (or file names carrying those
//! words); splits are taken as provided.

use std::path::{Path, PathBuf};

use super::{DataError, Pair, Split};
use crate::kg::{Fact, KnowledgeGraph};

/// `birthPlace` -> `birth place`: a word boundary at every lower-to-upper
/// transition (and before the last capital of an acronym run followed by a
/// lowercase letter), then lowercased.
pub fn camel_to_words(name: &str) -> String {
    let chars: Vec<char> = name.chars().collect();
    let mut out = String::with_capacity(name.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if i > 0 && c.is_uppercase() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                out.push(' ');
            }
        }
        out.extend(c.to_lowercase());
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `Abraham_Lincoln` -> `Abraham Lincoln`; surrounding double quotes of
/// literal values are removed.
pub fn clean_entity(name: &str) -> String {
    let trimmed = name.trim();
    let unquoted = trimmed.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(trimmed);
    unquoted.replace('_', " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn split_of(path: &Path) -> Option<Split> {
    for comp in path.components().rev() {
        let name = comp.as_os_str().to_string_lossy().to_lowercase();
        for (needle, split) in [("train", Split::Train), ("dev", Split::Val), ("test", Split::Test)] {
            if name == needle || name.contains(needle) {
                return Some(split);
            }
        }
    }
    None
}

fn xml_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), DataError> {
    let entries = std::fs::read_dir(dir).map_err(|source| DataError::Io { path: dir.to_path_buf(), source })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            xml_files(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "xml") {
            out.push(p);
        }
    }
    Ok(())
}

/// Parses one WebNLG XML document into pairs, one per lexicalization.
pub fn parse_webnlg_xml(xml: &str, split: Split, origin: &str) -> Result<Vec<Pair>, DataError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| DataError::malformed(origin, e.to_string()))?;
    let mut pairs = Vec::new();
    for entry in doc.descendants().filter(|n| n.has_tag_name("entry")) {
        let eid = format!("{origin}:{}", entry.attribute("eid").unwrap_or("?"));
        let triples = entry
            .children()
            .find(|n| n.has_tag_name("modifiedtripleset"))
            .ok_or_else(|| DataError::malformed(&eid, "no modifiedtripleset"))?;
        let mut facts = Vec::new();
        for t in triples.children().filter(|n| n.has_tag_name("mtriple")) {
            let raw = t.text().unwrap_or_default();
            let parts: Vec<&str> = raw.split(" | ").collect();
            if parts.len() != 3 {
                return Err(DataError::malformed(&eid, format!("bad triple {raw:?}")));
            }
            let fact = Fact::new(&clean_entity(parts[0]), &camel_to_words(parts[1].trim()), &clean_entity(parts[2]));
            fact.validate().map_err(|e| DataError::malformed(&eid, e.to_string()))?;
            facts.push(fact);
        }
        let graph = KnowledgeGraph::new(facts);
        for (k, lex) in entry.children().filter(|n| n.has_tag_name("lex")).enumerate() {
            // some releases nest the sentence in a <text> child
            let text = lex
                .children()
                .find(|n| n.has_tag_name("text"))
                .and_then(|n| n.text())
                .or_else(|| lex.text())
                .unwrap_or_default()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            if text.is_empty() {
                continue;
            }
            pairs.push(Pair { id: format!("{eid}#{k}"), group: 0, split, graph: graph.clone(), text });
        }
    }
    Ok(pairs)
}

/// Loads every XML file under `root`. The split comes from the nearest path
/// component naming train/dev/test; files with no split are skipped.
pub fn load_webnlg(root: &Path) -> Result<Vec<Pair>, DataError> {
    if !root.exists() {
        return Err(DataError::MissingFile(root.to_path_buf()));
    }
    let mut files = Vec::new();
    xml_files(root, &mut files)?;
    let mut pairs = Vec::new();
    for file in files {
        let rel = file.strip_prefix(root).unwrap_or(&file);
        let Some(split) = split_of(rel) else {
            log::warn!("skipping {}: no split in path", file.display());
            continue;
        };
        let xml = std::fs::read_to_string(&file).map_err(|source| DataError::Io { path: file.clone(), source })?;
        pairs.extend(parse_webnlg_xml(&xml, split, &rel.display().to_string())?);
    }
    Ok(pairs)
}
