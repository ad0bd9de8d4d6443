use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Pair, Split};
use crate::kg::{Fact, KnowledgeGraph};

/// One JSONL line: a graph and every text paired with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub split: Split,
    pub graph: Vec<[String; 3]>,
    pub texts: Vec<String>,
}

impl Record {
    pub fn knowledge_graph(&self) -> KnowledgeGraph {
        self.graph.iter().map(|[s, p, o]| Fact::new(s, p, o)).collect()
    }
}

/// Groups pairs sharing split and graph into one record; first-seen order.
pub fn records_from_pairs(pairs: &[Pair]) -> Vec<Record> {
    let mut index: HashMap<(Split, String), usize> = HashMap::new();
    let mut out: Vec<Record> = Vec::new();
    for p in pairs {
        let key = (p.split, p.graph.serialization_key());
        match index.get(&key) {
            Some(&i) => {
                if !out[i].texts.contains(&p.text) {
                    out[i].texts.push(p.text.clone());
                }
            }
            None => {
                index.insert(key, out.len());
                out.push(Record {
                    id: p.id.clone(),
                    split: p.split,
                    graph: p
                        .graph
                        .facts
                        .iter()
                        .map(|f| [f.subject.clone(), f.predicate.clone(), f.object.clone()])
                        .collect(),
                    texts: vec![p.text.clone()],
                });
            }
        }
    }
    out
}

/// Flattens records back to one pair per text. Pair ids are `id#k`.
pub fn pairs_from_records(records: &[Record]) -> Vec<Pair> {
    records
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| {
            let graph = rec.knowledge_graph();
            rec.texts.iter().enumerate().map(move |(k, t)| Pair {
                id: if rec.texts.len() == 1 { rec.id.clone() } else { format!("{}#{k}", rec.id) },
                group: r as u64,
                split: rec.split,
                graph: graph.clone(),
                text: t.clone(),
            })
        })
        .collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Record>, DataError> {
    let file = File::open(path).map_err(|_| DataError::MissingFile(path.to_path_buf()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| DataError::malformed(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, records: &[Record]) -> Result<(), DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("records always serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_shape() {
        let rec = Record {
            id: "x1".into(),
            split: Split::Val,
            graph: vec![["hat".into(), "attr".into(), "pink".into()]],
            texts: vec!["a pink hat".into()],
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(line, r#"{"id":"x1","split":"val","graph":[["hat","attr","pink"]],"texts":["a pink hat"]}"#);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("val.jsonl");
        write_jsonl(&path, &[rec.clone(), rec.clone()]).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), vec![rec.clone(), rec]);
        assert!(matches!(read_jsonl(&dir.path().join("nope.jsonl")), Err(DataError::MissingFile(_))));

        std::fs::write(&path, "{\"id\": 3}\n").unwrap();
        assert!(matches!(read_jsonl(&path), Err(DataError::MalformedRecord { .. })));
    }

    #[test]
    fn grouping_round_trip() {
        let g: KnowledgeGraph = [Fact::new("a", "r", "b")].into_iter().collect();
        let mk = |id: &str, text: &str| Pair {
            id: id.into(),
            group: 0,
            split: Split::Train,
            graph: g.clone(),
            text: text.into(),
        };
        let recs = records_from_pairs(&[mk("p0", "one"), mk("p1", "two")]);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].texts, vec!["one", "two"]);
        let back = pairs_from_records(&recs);
        assert_eq!(back.iter().map(|p| p.text.as_str()).collect::<Vec<_>>(), vec!["one", "two"]);
    }
}
