//! Visual Genome region-graph loader.
//!
//! Input is the public `region_graphs.json` layout: a list of images, each
//! with `regions` holding a `phrase`, `objects` and `relationships`.
//! Attribute arrays are optional; object names come from `name` or the
//! first entry of `names`.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{DataError, Pair, Split};
use crate::kg::{Fact, KnowledgeGraph, ATTR};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RawObject {
    pub object_id: u64,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
}

impl RawObject {
    pub fn label(&self) -> Option<&str> {
        self.name.as_deref().or_else(|| self.names.first().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RawRelationship {
    pub subject_id: u64,
    pub object_id: u64,
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RawRegion {
    #[serde(default)]
    pub image_id: u64,
    pub region_id: u64,
    #[serde(alias = "description")]
    pub phrase: String,
    #[serde(default)]
    pub objects: Vec<RawObject>,
    #[serde(default)]
    pub relationships: Vec<RawRelationship>,
}

#[derive(Debug, Deserialize)]
struct RawImage {
    image_id: u64,
    #[serde(default)]
    regions: Vec<RawRegion>,
}

/// Parses region-graph JSON text. Regions inherit their image's id.
pub fn parse_vg(json: &str) -> Result<Vec<RawRegion>, DataError> {
    let images: Vec<RawImage> =
        serde_json::from_str(json).map_err(|e| DataError::malformed("region_graphs", e.to_string()))?;
    Ok(images
        .into_iter()
        .flat_map(|img| {
            let id = img.image_id;
            img.regions.into_iter().map(move |mut r| {
                r.image_id = id;
                r
            })
        })
        .collect())
}

pub fn load_vg(path: &Path) -> Result<Vec<RawRegion>, DataError> {
    let file = if path.is_dir() { path.join("region_graphs.json") } else { path.to_path_buf() };
    let json = std::fs::read_to_string(&file).map_err(|_| DataError::MissingFile(file.clone()))?;
    parse_vg(&json)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPairs {
    pub pairs: Vec<Pair>,
    /// Regions dropped because their graph or description came out empty.
    pub dropped: usize,
}

/// One fact per relationship, then one `(object, attr, attribute)` fact per
/// attribute in declaration order. Facts whose labels are empty or hold
/// reserved tokens are skipped.
pub fn regions_to_instances(regions: &[RawRegion]) -> Result<RegionPairs, DataError> {
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for r in regions {
        let objects: HashMap<u64, &RawObject> = r.objects.iter().map(|o| (o.object_id, o)).collect();
        let label = |id: u64| -> Result<&str, DataError> {
            objects.get(&id).and_then(|o| o.label()).ok_or_else(|| {
                DataError::malformed(r.region_id, format!("relationship references undeclared object {id}"))
            })
        };
        let mut facts = Vec::new();
        for rel in &r.relationships {
            facts.push(Fact::new(label(rel.subject_id)?, &rel.predicate, label(rel.object_id)?));
        }
        for o in &r.objects {
            if let Some(name) = o.label() {
                facts.extend(o.attributes.iter().map(|a| Fact::new(name, ATTR, a)));
            }
        }
        facts.retain(|f| f.validate().is_ok());
        let text = r.phrase.split_whitespace().collect::<Vec<_>>().join(" ");
        if facts.is_empty() || text.is_empty() {
            dropped += 1;
            continue;
        }
        pairs.push(Pair {
            id: format!("{}-{}", r.image_id, r.region_id),
            group: r.image_id,
            split: Split::Train,
            graph: KnowledgeGraph::new(facts),
            text,
        });
    }
    Ok(RegionPairs { pairs, dropped })
}
