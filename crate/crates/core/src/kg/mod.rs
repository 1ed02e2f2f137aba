//! Integer-indexed triple store.
//!
//! Entities and relations get dense ids in order of first appearance. The
//! store keeps a subject-predicate index and an undirected adjacency view
//! next to the triple list; all three are built together and never drift.

mod metrics;
mod ops;

pub use metrics::{entity_density, entity_entropy, relation_density, relation_entropy, Metrics};
pub use ops::{ablate_triples, common_subgraph};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    Parse { line: usize, found: usize },
    #[error("line {line}: empty field")]
    EmptyField { line: usize },
    #[error("knowledge graph has no triples")]
    Empty,
    #[error("knowledge graph has no {0}")]
    NoElements(&'static str),
    #[error("cannot remove {requested} triples from a graph with {available}")]
    TooManyRemovals { requested: usize, available: usize },
    #[error("invalid ratio {0}: must be positive and finite")]
    InvalidRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: EntityId, predicate: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }
}

/// Orientation of an adjacency entry relative to the entity that owns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Neighbor {
    pub relation: RelationId,
    pub entity: EntityId,
    pub direction: Direction,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    name: String,
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_lookup: HashMap<String, EntityId>,
    relation_lookup: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    index_sp: HashMap<(EntityId, RelationId), BTreeSet<EntityId>>,
    adjacency: Vec<Vec<Neighbor>>,
}

impl KnowledgeGraph {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entity_names: Vec::new(),
            relation_names: Vec::new(),
            entity_lookup: HashMap::new(),
            relation_lookup: HashMap::new(),
            triples: Vec::new(),
            triple_set: HashSet::new(),
            index_sp: HashMap::new(),
            adjacency: Vec::new(),
        }
    }

    /// Builds a graph from named triples; duplicates collapse.
    pub fn from_named_triples<I, S, P, O>(name: impl Into<String>, triples: I) -> Self
    where
        I: IntoIterator<Item = (S, P, O)>,
        S: AsRef<str>,
        P: AsRef<str>,
        O: AsRef<str>,
    {
        let mut kg = Self::new(name);
        for (s, p, o) in triples {
            kg.insert_named(s.as_ref(), p.as_ref(), o.as_ref());
        }
        kg
    }

    /// Reads a UTF-8 file with one `subject<TAB>predicate<TAB>object` per
    /// line. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>, name: impl Into<String>) -> Result<Self, KgError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_tsv(&text, name)
    }

    pub fn parse_tsv(text: &str, name: impl Into<String>) -> Result<Self, KgError> {
        let mut kg = Self::new(name);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::Parse {
                    line: i + 1,
                    found: fields.len(),
                });
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(KgError::EmptyField { line: i + 1 });
            }
            kg.insert_named(fields[0], fields[1], fields[2]);
        }
        if kg.triples.is_empty() {
            return Err(KgError::Empty);
        }
        log::debug!(
            "loaded {}: {} entities, {} relations, {} triples",
            kg.name,
            kg.num_entities(),
            kg.num_relations(),
            kg.num_triples()
        );
        Ok(kg)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let (s, p, o) = self.names_of(t);
            out.push_str(s);
            out.push('\t');
            out.push_str(p);
            out.push('\t');
            out.push_str(o);
            out.push('\n');
        }
        out
    }

    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_lookup.get(name) {
            return id;
        }
        let id = EntityId(self.entity_names.len() as u32);
        self.entity_names.push(name.to_owned());
        self.entity_lookup.insert(name.to_owned(), id);
        self.adjacency.push(Vec::new());
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_lookup.get(name) {
            return id;
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_names.push(name.to_owned());
        self.relation_lookup.insert(name.to_owned(), id);
        id
    }

    /// Returns `true` if the triple was new.
    pub fn insert_named(&mut self, s: &str, p: &str, o: &str) -> bool {
        let s = self.intern_entity(s);
        let p = self.intern_relation(p);
        let o = self.intern_entity(o);
        self.insert(Triple::new(s, p, o))
    }

    /// Inserts a triple over already interned ids.
    pub fn insert(&mut self, t: Triple) -> bool {
        assert!(
            t.subject.index() < self.entity_names.len()
                && t.object.index() < self.entity_names.len()
                && t.predicate.index() < self.relation_names.len(),
            "triple references unknown ids"
        );
        if !self.triple_set.insert(t) {
            return false;
        }
        self.triples.push(t);
        self.index_sp
            .entry((t.subject, t.predicate))
            .or_default()
            .insert(t.object);
        insert_sorted(
            &mut self.adjacency[t.subject.index()],
            Neighbor {
                relation: t.predicate,
                entity: t.object,
                direction: Direction::Outgoing,
            },
        );
        insert_sorted(
            &mut self.adjacency[t.object.index()],
            Neighbor {
                relation: t.predicate,
                entity: t.subject,
                direction: Direction::Incoming,
            },
        );
        true
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Triples in insertion order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn has_triple(&self, s: EntityId, p: RelationId, o: EntityId) -> bool {
        self.triple_set.contains(&Triple::new(s, p, o))
    }

    pub fn objects(&self, s: EntityId, p: RelationId) -> Option<&BTreeSet<EntityId>> {
        self.index_sp.get(&(s, p))
    }

    /// Sorted adjacency entries of `e`, both directions.
    pub fn neighbors(&self, e: EntityId) -> &[Neighbor] {
        &self.adjacency[e.index()]
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_names.len() as u32).map(EntityId)
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relation_names.len() as u32).map(RelationId)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entity_names[e.index()]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relation_names[r.index()]
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_lookup.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_lookup.get(name).copied()
    }

    pub fn names_of(&self, t: &Triple) -> (&str, &str, &str) {
        (
            self.entity_name(t.subject),
            self.relation_name(t.predicate),
            self.entity_name(t.object),
        )
    }

    pub(crate) fn named_triple_set(&self) -> HashSet<(&str, &str, &str)> {
        self.triples.iter().map(|t| self.names_of(t)).collect()
    }
}

fn insert_sorted(list: &mut Vec<Neighbor>, n: Neighbor) {
    if let Err(pos) = list.binary_search(&n) {
        list.insert(pos, n);
    }
}
