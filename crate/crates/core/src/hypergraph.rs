//! The hierarchical heterogeneous hypergraph: entities, pairwise relations and
//! multi-entity associations as vertices, deductive incidence between the
//! higher layers and their member entities, and provenance links to chunks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current version of the persisted store document.
pub const STORE_FORMAT_VERSION: u32 = 1;

const NAME_SEPARATOR: char = '⊕';

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Layer {
    Entity = 1,
    PairRelation = 2,
    MultiAssociation = 3,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Entity, Layer::PairRelation, Layer::MultiAssociation];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i64) -> Option<Layer> {
        match code {
            1 => Some(Layer::Entity),
            2 => Some(Layer::PairRelation),
            3 => Some(Layer::MultiAssociation),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Layer::Entity => "Entities",
            Layer::PairRelation => "Pairwise Relations",
            Layer::MultiAssociation => "Multiple Associations",
        }
    }
}

impl From<Layer> for u8 {
    fn from(layer: Layer) -> u8 {
        layer.code()
    }
}

impl TryFrom<u8> for Layer {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, Self::Error> {
        Layer::from_code(code as i64).ok_or_else(|| format!("layer code {code} outside 1..=3"))
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Which way along a deductive hyperedge: forward goes from a pair or
/// association down to its entities, backward from an entity up to the
/// pairs and associations that contain it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Canonical vertex key: `"<layer>|"` followed by the case-folded, trimmed
/// names, sorted and joined with `⊕`. Order-insensitive for layers 2 and 3.
pub fn canonical_key<S: AsRef<str>>(layer: Layer, names: &[S]) -> Result<String> {
    if names.is_empty() {
        return Err(Error::InvalidArgument("canonical_key needs at least one name".into()));
    }
    let mut normalized: Vec<String> = names.iter().map(|n| normalize_name(n.as_ref())).collect();
    if normalized.iter().any(|n| n.is_empty()) {
        return Err(Error::InvalidArgument("vertex names must not be blank".into()));
    }
    match layer {
        Layer::Entity if normalized.len() != 1 => {
            return Err(Error::InvalidArgument(format!(
                "an entity key takes exactly one name, got {}",
                normalized.len()
            )))
        }
        Layer::PairRelation if normalized.len() != 2 => {
            return Err(Error::InvalidArgument(format!(
                "a pair key takes exactly two names, got {}",
                normalized.len()
            )))
        }
        Layer::MultiAssociation if normalized.len() < 2 => {
            return Err(Error::InvalidArgument(
                "an association key takes at least two names".into(),
            ))
        }
        _ => {}
    }
    normalized.sort();
    if normalized.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!(
            "duplicate member names in {normalized:?}"
        )));
    }
    let mut key = format!("{}|", layer.code());
    for (i, name) in normalized.iter().enumerate() {
        if i > 0 {
            key.push(NAME_SEPARATOR);
        }
        key.push_str(name);
    }
    Ok(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub key: String,
    pub layer: Layer,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub attributes: Vec<String>,
    /// Member entity keys, sorted. Empty for entities.
    #[serde(default)]
    pub members: Vec<String>,
    #[serde(default)]
    pub chunk_ids: BTreeSet<String>,
}

impl Vertex {
    pub fn entity(name: &str, description: &str, attributes: Vec<String>) -> Result<Vertex> {
        Ok(Vertex {
            key: canonical_key(Layer::Entity, &[name])?,
            layer: Layer::Entity,
            name: name.trim().to_string(),
            description: description.trim().to_string(),
            attributes,
            members: Vec::new(),
            chunk_ids: BTreeSet::new(),
        })
    }

    /// A pair (layer 2) or association (layer 3) over the named entities.
    /// The display name keeps the given member order, e.g. `<A, B>`.
    pub fn relation<S: AsRef<str>>(
        layer: Layer,
        member_names: &[S],
        description: &str,
        attributes: Vec<String>,
    ) -> Result<Vertex> {
        if layer == Layer::Entity {
            return Err(Error::InvalidArgument("relation vertices live on layer 2 or 3".into()));
        }
        let key = canonical_key(layer, member_names)?;
        let mut members = member_names
            .iter()
            .map(|n| canonical_key(Layer::Entity, &[n.as_ref()]))
            .collect::<Result<Vec<_>>>()?;
        members.sort();
        let display: Vec<&str> = member_names.iter().map(|n| n.as_ref().trim()).collect();
        Ok(Vertex {
            key,
            layer,
            name: format!("<{}>", display.join(", ")),
            description: description.trim().to_string(),
            attributes,
            members,
            chunk_ids: BTreeSet::new(),
        })
    }

    pub fn with_chunk(mut self, chunk_id: impl Into<String>) -> Vertex {
        self.chunk_ids.insert(chunk_id.into());
        self
    }

    fn check_shape(&self) -> Result<()> {
        let ok = match self.layer {
            Layer::Entity => self.members.is_empty(),
            Layer::PairRelation => self.members.len() == 2,
            Layer::MultiAssociation => self.members.len() >= 2,
        };
        if !ok {
            return Err(Error::InvariantViolation(format!(
                "vertex {} on layer {} has {} members",
                self.key,
                self.layer,
                self.members.len()
            )));
        }
        let expected = match self.layer {
            Layer::Entity => canonical_key(Layer::Entity, &[&self.name])?,
            layer => {
                let names: Vec<&str> = self
                    .members
                    .iter()
                    .map(|m| m.strip_prefix("1|").unwrap_or(m.as_str()))
                    .collect();
                canonical_key(layer, &names)?
            }
        };
        if expected != self.key {
            return Err(Error::InvariantViolation(format!(
                "vertex key {} does not match its canonical form {expected}",
                self.key
            )));
        }
        if self.members.iter().any(|m| !m.starts_with("1|")) {
            return Err(Error::InvariantViolation(format!(
                "vertex {} lists a non-entity member",
                self.key
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub source_title: String,
    pub text: String,
    pub token_count: usize,
    #[serde(default)]
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hypergraph {
    vertices: BTreeMap<String, Vertex>,
    chunks: BTreeMap<String, Chunk>,
    // entity key -> layer-2/3 vertices listing it as a member
    containing: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct StoreDocument {
    format_version: u32,
    vertices: BTreeMap<String, Vertex>,
    chunks: BTreeMap<String, Chunk>,
}

/// Per-layer vertex counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub entities: usize,
    pub pair_relations: usize,
    pub multi_associations: usize,
}

impl Hypergraph {
    pub fn new() -> Hypergraph {
        Hypergraph::default()
    }

    pub fn add_chunk(&mut self, chunk: Chunk) {
        self.chunks.insert(chunk.id.clone(), chunk);
    }

    pub fn chunk(&self, id: &str) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn chunk_mut(&mut self, id: &str) -> Option<&mut Chunk> {
        self.chunks.get_mut(id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn vertex(&self, key: &str) -> Option<&Vertex> {
        self.vertices.get(key)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.chunks.is_empty()
    }

    pub fn layer_counts(&self) -> LayerCounts {
        let mut counts = LayerCounts::default();
        for v in self.vertices.values() {
            match v.layer {
                Layer::Entity => counts.entities += 1,
                Layer::PairRelation => counts.pair_relations += 1,
                Layer::MultiAssociation => counts.multi_associations += 1,
            }
        }
        counts
    }

    /// Inserts `v`, or merges it into the vertex already stored under the
    /// same key: descriptions are joined with a newline (skipping one that is
    /// already present), attributes and chunk ids are unioned.
    pub fn upsert_vertex(&mut self, v: Vertex) -> Result<String> {
        v.check_shape()?;
        for member in &v.members {
            match self.vertices.get(member) {
                Some(m) if m.layer == Layer::Entity => {}
                Some(_) => {
                    return Err(Error::InvariantViolation(format!(
                        "member {member} of {} is not an entity",
                        v.key
                    )))
                }
                None => {
                    return Err(Error::InvariantViolation(format!(
                        "member {member} of {} is not in the graph",
                        v.key
                    )))
                }
            }
        }
        if let Some(missing) = v.chunk_ids.iter().find(|c| !self.chunks.contains_key(*c)) {
            return Err(Error::InvariantViolation(format!(
                "vertex {} references unknown chunk {missing}",
                v.key
            )));
        }

        let key = v.key.clone();
        for member in &v.members {
            self.containing.entry(member.clone()).or_default().insert(key.clone());
        }
        match self.vertices.get_mut(&key) {
            None => {
                self.vertices.insert(key.clone(), v);
            }
            Some(existing) => {
                if existing.layer != v.layer {
                    return Err(Error::InvariantViolation(format!(
                        "layer mismatch while merging {key}"
                    )));
                }
                let description = v.description.trim();
                if !description.is_empty()
                    && !existing.description.split('\n').any(|d| d == description)
                {
                    if !existing.description.is_empty() {
                        existing.description.push('\n');
                    }
                    existing.description.push_str(description);
                }
                for attr in v.attributes {
                    if !existing.attributes.contains(&attr) {
                        existing.attributes.push(attr);
                    }
                }
                existing.chunk_ids.extend(v.chunk_ids);
            }
        }
        Ok(key)
    }

    pub fn vertex_layer(&self, key: &str) -> Result<Layer> {
        self.vertices
            .get(key)
            .map(|v| v.layer)
            .ok_or_else(|| Error::NotFound(key.to_string()))
    }

    /// Member entities of a pair or association. Empty for entities.
    pub fn forward_neighbors(&self, key: &str) -> Result<&[String]> {
        self.vertices
            .get(key)
            .map(|v| v.members.as_slice())
            .ok_or_else(|| Error::NotFound(key.to_string()))
    }

    /// Pairs and associations containing an entity, in key order. Empty for
    /// layer-2/3 vertices.
    pub fn backward_neighbors(&self, key: &str) -> Result<impl Iterator<Item = &String> + '_> {
        if !self.vertices.contains_key(key) {
            return Err(Error::NotFound(key.to_string()));
        }
        Ok(self.containing.get(key).into_iter().flatten())
    }

    pub fn layer_filtered_neighbors(&self, key: &str, direction: Direction) -> Result<Vec<String>> {
        match direction {
            Direction::Forward => Ok(self.forward_neighbors(key)?.to_vec()),
            Direction::Backward => Ok(self.backward_neighbors(key)?.cloned().collect()),
        }
    }

    /// Number of chunks the vertex was extracted from.
    pub fn chunk_degree(&self, key: &str) -> Result<usize> {
        self.vertices
            .get(key)
            .map(|v| v.chunk_ids.len())
            .ok_or_else(|| Error::NotFound(key.to_string()))
    }

    /// Deductive incidence `(pair, entity)`.
    pub fn lr_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.incidence(Layer::PairRelation)
    }

    /// Deductive incidence `(association, entity)`.
    pub fn hr_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.incidence(Layer::MultiAssociation)
    }

    fn incidence(&self, layer: Layer) -> impl Iterator<Item = (&str, &str)> {
        self.vertices
            .values()
            .filter(move |v| v.layer == layer)
            .flat_map(|v| v.members.iter().map(move |m| (v.key.as_str(), m.as_str())))
    }

    /// Provenance incidence `(vertex, chunk)`.
    pub fn fr_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.vertices
            .values()
            .flat_map(|v| v.chunk_ids.iter().map(move |c| (v.key.as_str(), c.as_str())))
    }

    /// Structural invariants: vertex shapes, member existence, chunk refs.
    pub fn validate(&self) -> Result<()> {
        for (key, v) in &self.vertices {
            if key != &v.key {
                return Err(Error::InvariantViolation(format!(
                    "vertex stored under {key} carries key {}",
                    v.key
                )));
            }
            v.check_shape()?;
            for m in &v.members {
                if self.vertices.get(m).map(|e| e.layer) != Some(Layer::Entity) {
                    return Err(Error::InvariantViolation(format!(
                        "dangling member {m} in {key}"
                    )));
                }
            }
            for c in &v.chunk_ids {
                if !self.chunks.contains_key(c) {
                    return Err(Error::InvariantViolation(format!(
                        "vertex {key} references unknown chunk {c}"
                    )));
                }
            }
        }
        for (id, chunk) in &self.chunks {
            if id != &chunk.id {
                return Err(Error::InvariantViolation(format!(
                    "chunk stored under {id} carries id {}",
                    chunk.id
                )));
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the post-indexing rule that every
    /// vertex traces back to at least one chunk.
    pub fn validate_complete(&self) -> Result<()> {
        self.validate()?;
        if let Some(v) = self.vertices.values().find(|v| v.chunk_ids.is_empty()) {
            return Err(Error::InvariantViolation(format!("vertex {} has no source chunk", v.key)));
        }
        Ok(())
    }

    pub fn to_document_string(&self) -> Result<String> {
        self.validate()?;
        let doc = StoreDocument {
            format_version: STORE_FORMAT_VERSION,
            vertices: self.vertices.clone(),
            chunks: self.chunks.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_document_str(text: &str) -> Result<Hypergraph> {
        let doc: StoreDocument =
            serde_json::from_str(text).map_err(|e| Error::CorruptStore(e.to_string()))?;
        if doc.format_version != STORE_FORMAT_VERSION {
            return Err(Error::CorruptStore(format!(
                "unsupported store format version {}",
                doc.format_version
            )));
        }
        let mut containing: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for v in doc.vertices.values() {
            for m in &v.members {
                containing.entry(m.clone()).or_default().insert(v.key.clone());
            }
        }
        let graph = Hypergraph {
            vertices: doc.vertices,
            chunks: doc.chunks,
            containing,
        };
        graph.validate().map_err(|e| Error::CorruptStore(e.to_string()))?;
        Ok(graph)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_document_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Hypergraph> {
        let text = fs::read_to_string(path)?;
        Hypergraph::from_document_str(&text)
    }
}
