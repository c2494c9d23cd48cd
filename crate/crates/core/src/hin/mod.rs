//! Typed heterogeneous interaction graph.
//!
//! A [`Hin`] holds the five MOOC entity types, a [`NetworkSchema`] declaring
//! which typed relations may connect them, and per-relation edge lists with
//! accumulated observation counts. Graphs are immutable once built; meta-path
//! commuting matrices are derived from them in [`metapath`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::Csr;

pub mod metapath;

pub use metapath::{
    compose_meta_path, concept_meta_path_catalog, find_meta_path, user_meta_path_catalog, Direction, MetaPathSpec,
    MetaPathStep, PathAdjacency,
};

pub const USER_CLICK_CONCEPT: &str = "user-click-concept";
pub const USER_LEARN_COURSE: &str = "user-learn-course";
pub const USER_WATCH_VIDEO: &str = "user-watch-video";
pub const COURSE_TAUGHT_BY_TEACHER: &str = "course-taught_by-teacher";
pub const COURSE_CONTAIN_VIDEO: &str = "course-contain-video";
pub const VIDEO_INCLUDE_CONCEPT: &str = "video-include-concept";
pub const COURSE_INVOLVE_CONCEPT: &str = "course-involve-concept";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    User,
    Course,
    Video,
    Teacher,
    Concept,
}

impl EntityType {
    pub const ALL: [EntityType; 5] =
        [EntityType::User, EntityType::Course, EntityType::Video, EntityType::Teacher, EntityType::Concept];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::User => "user",
            EntityType::Course => "course",
            EntityType::Video => "video",
            EntityType::Teacher => "teacher",
            EntityType::Concept => "concept",
        }
    }

    /// Single-letter tag used when printing meta-paths (`U-K-U`).
    pub fn letter(self) -> char {
        match self {
            EntityType::User => 'U',
            EntityType::Course => 'C',
            EntityType::Video => 'V',
            EntityType::Teacher => 'T',
            EntityType::Concept => 'K',
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user" | "u" => Ok(EntityType::User),
            "course" | "c" => Ok(EntityType::Course),
            "video" | "v" => Ok(EntityType::Video),
            "teacher" | "t" => Ok(EntityType::Teacher),
            "concept" | "knowledge_concept" | "k" => Ok(EntityType::Concept),
            other => Err(Error::Config(format!("unknown entity type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationType {
    pub name: String,
    pub src: EntityType,
    pub dst: EntityType,
    /// Whether the inverse relation is implied (traversable in meta-paths).
    pub symmetric_closure: bool,
}

impl RelationType {
    pub fn new(name: &str, src: EntityType, dst: EntityType) -> Self {
        RelationType { name: name.to_string(), src, dst, symmetric_closure: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSchema {
    pub entity_types: BTreeSet<EntityType>,
    pub relation_types: Vec<RelationType>,
}

impl NetworkSchema {
    pub fn new(entity_types: impl IntoIterator<Item = EntityType>, relation_types: Vec<RelationType>) -> Self {
        NetworkSchema { entity_types: entity_types.into_iter().collect(), relation_types }
    }

    /// The five-type MOOC schema with its seven relations.
    pub fn mooc() -> Self {
        use EntityType::*;
        NetworkSchema::new(
            EntityType::ALL,
            vec![
                RelationType::new(USER_CLICK_CONCEPT, User, Concept),
                RelationType::new(USER_LEARN_COURSE, User, Course),
                RelationType::new(USER_WATCH_VIDEO, User, Video),
                RelationType::new(COURSE_TAUGHT_BY_TEACHER, Course, Teacher),
                RelationType::new(COURSE_CONTAIN_VIDEO, Course, Video),
                RelationType::new(VIDEO_INCLUDE_CONCEPT, Video, Concept),
                RelationType::new(COURSE_INVOLVE_CONCEPT, Course, Concept),
            ],
        )
    }

    pub fn relation(&self, name: &str) -> Option<&RelationType> {
        self.relation_types.iter().find(|r| r.name == name)
    }
}

/// A typed entity handle: dense index within its type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityRef {
    pub ty: EntityType,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: EntityRef,
    pub dst: EntityRef,
    pub weight: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityTable {
    ids: Vec<String>,
    names: Vec<String>,
}

impl EntityTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Heterogeneity { entity_types: usize, relation_types: usize },
    UndeclaredEndpoint { relation: String, ty: EntityType },
    DuplicateRelation(String),
    UndeclaredRelation(String),
    UndeclaredEntityType(EntityType),
    EndpointTypeMismatch { relation: String, expected: (EntityType, EntityType), found: (EntityType, EntityType) },
    DanglingEndpoint { relation: String, endpoint: EntityRef },
    DuplicateEdge { relation: String, src: usize, dst: usize },
    ZeroWeight { relation: String, src: usize, dst: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Heterogeneity { entity_types, relation_types } => write!(
                f,
                "heterogeneity condition |N|+|R|>2 violated ({entity_types} entity types, {relation_types} relation types)"
            ),
            Violation::UndeclaredEndpoint { relation, ty } => {
                write!(f, "relation '{relation}' uses undeclared entity type {ty}")
            }
            Violation::DuplicateRelation(name) => write!(f, "relation '{name}' declared twice"),
            Violation::UndeclaredRelation(name) => write!(f, "edges under undeclared relation '{name}'"),
            Violation::UndeclaredEntityType(ty) => write!(f, "entities of undeclared type {ty}"),
            Violation::EndpointTypeMismatch { relation, expected, found } => write!(
                f,
                "endpoint type mismatch in '{relation}': expected {}->{}, found {}->{}",
                expected.0, expected.1, found.0, found.1
            ),
            Violation::DanglingEndpoint { relation, endpoint } => write!(
                f,
                "edge in '{relation}' references missing {} #{}",
                endpoint.ty, endpoint.index
            ),
            Violation::DuplicateEdge { relation, src, dst } => {
                write!(f, "duplicate edge ({src}, {dst}) in '{relation}'")
            }
            Violation::ZeroWeight { relation, src, dst } => {
                write!(f, "edge ({src}, {dst}) in '{relation}' has zero weight")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("no violations");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Heterogeneous information network: typed entities, typed edges, schema.
pub struct Hin {
    schema: NetworkSchema,
    entities: BTreeMap<EntityType, EntityTable>,
    lookup: HashMap<String, EntityRef>,
    edges: BTreeMap<String, Vec<Edge>>,
    report: OnceLock<ValidationReport>,
    path_cache: Mutex<HashMap<String, Arc<PathAdjacency>>>,
}

impl fmt::Debug for Hin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hin").field("entities", &self.entity_counts()).field("edges", &self.edge_counts()).finish()
    }
}

impl Clone for Hin {
    fn clone(&self) -> Self {
        Hin {
            schema: self.schema.clone(),
            entities: self.entities.clone(),
            lookup: self.lookup.clone(),
            edges: self.edges.clone(),
            report: OnceLock::new(),
            path_cache: Mutex::new(HashMap::new()),
        }
    }
}

impl PartialEq for Hin {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.entities == other.entities && self.edges == other.edges
    }
}

impl Hin {
    /// Assembles a graph without any consistency checks. Use
    /// [`validate_schema`] to inspect the result; downstream operations
    /// refuse graphs that fail validation.
    pub fn from_raw(
        schema: NetworkSchema,
        entities: Vec<(EntityType, String, String)>,
        edges: Vec<(String, EntityRef, EntityRef, u32)>,
    ) -> Self {
        let mut tables: BTreeMap<EntityType, EntityTable> =
            EntityType::ALL.iter().map(|t| (*t, EntityTable::default())).collect();
        let mut lookup = HashMap::new();
        for (ty, id, name) in entities {
            let table = tables.get_mut(&ty).unwrap();
            lookup.insert(id.clone(), EntityRef { ty, index: table.len() });
            table.ids.push(id);
            table.names.push(name);
        }
        let mut by_relation: BTreeMap<String, Vec<Edge>> = BTreeMap::new();
        for rel in &schema.relation_types {
            by_relation.entry(rel.name.clone()).or_default();
        }
        for (rel, src, dst, weight) in edges {
            by_relation.entry(rel).or_default().push(Edge { src, dst, weight });
        }
        Hin {
            schema,
            entities: tables,
            lookup,
            edges: by_relation,
            report: OnceLock::new(),
            path_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn schema(&self) -> &NetworkSchema {
        &self.schema
    }

    pub fn entities(&self, ty: EntityType) -> &EntityTable {
        &self.entities[&ty]
    }

    pub fn count(&self, ty: EntityType) -> usize {
        self.entities[&ty].len()
    }

    pub fn lookup(&self, external_id: &str) -> Option<EntityRef> {
        self.lookup.get(external_id).copied()
    }

    pub fn external_id(&self, entity: EntityRef) -> &str {
        &self.entities[&entity.ty].ids[entity.index]
    }

    pub fn edges(&self, relation: &str) -> &[Edge] {
        self.edges.get(relation).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.edges.keys().map(String::as_str)
    }

    pub fn entity_counts(&self) -> BTreeMap<EntityType, usize> {
        self.entities.iter().map(|(t, tab)| (*t, tab.len())).collect()
    }

    pub fn edge_counts(&self) -> BTreeMap<String, usize> {
        self.edges.iter().map(|(r, e)| (r.clone(), e.len())).collect()
    }

    /// Cached validation; errors if the graph violates any invariant.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.report.get_or_init(|| validate_schema(self));
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidGraph(report.to_string()))
        }
    }

    /// Binarized `src x dst` incidence matrix of a relation.
    pub fn incidence(&self, relation: &str) -> Result<Csr<u64>> {
        let rel = self.schema.relation(relation).ok_or_else(|| Error::MissingRelation(relation.to_string()))?;
        let triplets: Vec<(usize, usize, u64)> =
            self.edges(relation).iter().map(|e| (e.src.index, e.dst.index, 1)).collect();
        let m = Csr::from_triplets(self.count(rel.src), self.count(rel.dst), &triplets);
        Ok(m.binarized(1))
    }

    pub(crate) fn cached_path(&self, spec: &MetaPathSpec) -> Option<Arc<PathAdjacency>> {
        let cache = self.path_cache.lock().unwrap();
        cache.get(&spec.name).filter(|p| p.meta_path == *spec).cloned()
    }

    pub(crate) fn store_path(&self, adj: Arc<PathAdjacency>) {
        let mut cache = self.path_cache.lock().unwrap();
        cache.insert(adj.meta_path.name.clone(), adj);
    }
}

/// Checks every structural invariant of the graph and its schema.
pub fn validate_schema(hin: &Hin) -> ValidationReport {
    let mut violations = Vec::new();
    let schema = &hin.schema;

    if schema.entity_types.len() + schema.relation_types.len() <= 2 {
        violations.push(Violation::Heterogeneity {
            entity_types: schema.entity_types.len(),
            relation_types: schema.relation_types.len(),
        });
    }

    let mut seen_names = BTreeSet::new();
    for rel in &schema.relation_types {
        if !seen_names.insert(rel.name.as_str()) {
            violations.push(Violation::DuplicateRelation(rel.name.clone()));
        }
        for ty in [rel.src, rel.dst] {
            if !schema.entity_types.contains(&ty) {
                violations.push(Violation::UndeclaredEndpoint { relation: rel.name.clone(), ty });
            }
        }
    }

    for (ty, table) in &hin.entities {
        if !table.is_empty() && !schema.entity_types.contains(ty) {
            violations.push(Violation::UndeclaredEntityType(*ty));
        }
    }

    for (name, edges) in &hin.edges {
        let Some(rel) = schema.relation(name) else {
            if !edges.is_empty() {
                violations.push(Violation::UndeclaredRelation(name.clone()));
            }
            continue;
        };
        let mut pairs = BTreeSet::new();
        for e in edges {
            if (e.src.ty, e.dst.ty) != (rel.src, rel.dst) {
                violations.push(Violation::EndpointTypeMismatch {
                    relation: name.clone(),
                    expected: (rel.src, rel.dst),
                    found: (e.src.ty, e.dst.ty),
                });
                continue;
            }
            for end in [e.src, e.dst] {
                if end.index >= hin.count(end.ty) {
                    violations.push(Violation::DanglingEndpoint { relation: name.clone(), endpoint: end });
                }
            }
            if !pairs.insert((e.src.index, e.dst.index)) {
                violations.push(Violation::DuplicateEdge {
                    relation: name.clone(),
                    src: e.src.index,
                    dst: e.dst.index,
                });
            }
            if e.weight == 0 {
                violations.push(Violation::ZeroWeight { relation: name.clone(), src: e.src.index, dst: e.dst.index });
            }
        }
    }

    ValidationReport { violations }
}

/// Incremental, checked construction of a [`Hin`]. Entity indices are
/// assigned in insertion order; repeated edges accumulate weight.
#[derive(Debug)]
pub struct HinBuilder {
    schema: NetworkSchema,
    entities: Vec<(EntityType, String, String)>,
    lookup: HashMap<String, EntityRef>,
    counts: BTreeMap<EntityType, usize>,
    edges: BTreeMap<String, BTreeMap<(usize, usize), u32>>,
}

impl HinBuilder {
    pub fn new(schema: NetworkSchema) -> Self {
        HinBuilder {
            schema,
            entities: Vec::new(),
            lookup: HashMap::new(),
            counts: BTreeMap::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn mooc() -> Self {
        Self::new(NetworkSchema::mooc())
    }

    pub fn add_entity(&mut self, ty: EntityType, external_id: &str, display_name: &str) -> Result<EntityRef> {
        if self.lookup.contains_key(external_id) {
            return Err(Error::InvalidGraph(format!("duplicate entity id '{external_id}'")));
        }
        let count = self.counts.entry(ty).or_insert(0);
        let handle = EntityRef { ty, index: *count };
        *count += 1;
        self.lookup.insert(external_id.to_string(), handle);
        self.entities.push((ty, external_id.to_string(), display_name.to_string()));
        Ok(handle)
    }

    pub fn lookup(&self, external_id: &str) -> Option<EntityRef> {
        self.lookup.get(external_id).copied()
    }

    pub fn count(&self, ty: EntityType) -> usize {
        self.counts.get(&ty).copied().unwrap_or(0)
    }

    /// Adds `count` observations of a relation between two known entities.
    pub fn add_edge(&mut self, relation: &str, src_id: &str, dst_id: &str, count: u32) -> Result<()> {
        let src = self.lookup(src_id).ok_or_else(|| Error::UnknownEntity(src_id.to_string()))?;
        let dst = self.lookup(dst_id).ok_or_else(|| Error::UnknownEntity(dst_id.to_string()))?;
        self.add_edge_refs(relation, src, dst, count)
    }

    pub fn add_edge_refs(&mut self, relation: &str, src: EntityRef, dst: EntityRef, count: u32) -> Result<()> {
        let rel = self.schema.relation(relation).ok_or_else(|| Error::MissingRelation(relation.to_string()))?;
        if (src.ty, dst.ty) != (rel.src, rel.dst) {
            return Err(Error::InvalidGraph(format!(
                "endpoint type mismatch in '{relation}': expected {}->{}, found {}->{}",
                rel.src, rel.dst, src.ty, dst.ty
            )));
        }
        if src.index >= self.count(src.ty) || dst.index >= self.count(dst.ty) {
            return Err(Error::IndexOutOfRange(format!("edge endpoint in '{relation}'")));
        }
        if count == 0 {
            return Err(Error::InvalidGraph(format!("zero-count edge in '{relation}'")));
        }
        *self.edges.entry(relation.to_string()).or_default().entry((src.index, dst.index)).or_insert(0) += count;
        Ok(())
    }

    pub fn build(self) -> Hin {
        let mut edges = Vec::new();
        for (name, pairs) in self.edges {
            let rel = self.schema.relation(&name).expect("checked on insert").clone();
            for ((s, d), w) in pairs {
                edges.push((name.clone(), EntityRef { ty: rel.src, index: s }, EntityRef { ty: rel.dst, index: d }, w));
            }
        }
        Hin::from_raw(self.schema, self.entities, edges)
    }
}
