//! Meta-path specifications and their commuting matrices.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    EntityType, Hin, NetworkSchema, COURSE_INVOLVE_CONCEPT, COURSE_TAUGHT_BY_TEACHER, USER_CLICK_CONCEPT,
    USER_LEARN_COURSE, USER_WATCH_VIDEO, VIDEO_INCLUDE_CONCEPT,
};
use crate::error::{Error, Result};
use crate::sparse::Csr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaPathStep {
    pub relation: String,
    pub direction: Direction,
}

impl MetaPathStep {
    pub fn forward(relation: &str) -> Self {
        MetaPathStep { relation: relation.to_string(), direction: Direction::Forward }
    }

    pub fn inverse(relation: &str) -> Self {
        MetaPathStep { relation: relation.to_string(), direction: Direction::Inverse }
    }
}

/// An ordered relation sequence connecting two entities of the anchor type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaPathSpec {
    pub name: String,
    pub steps: Vec<MetaPathStep>,
    pub anchor: EntityType,
}

impl MetaPathSpec {
    pub fn new(name: &str, anchor: EntityType, steps: Vec<MetaPathStep>) -> Self {
        MetaPathSpec { name: name.to_string(), steps, anchor }
    }

    /// Resolves each step to its `(from, to)` entity types after applying the
    /// direction, and checks the chain against the schema.
    pub fn resolve(&self, schema: &NetworkSchema) -> Result<Vec<(EntityType, EntityType)>> {
        let err = |message: String| Error::MetaPath { path: self.name.clone(), message };
        if self.steps.is_empty() {
            return Err(err("meta-path has no steps".into()));
        }
        let mut hops = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            let rel = schema
                .relation(&step.relation)
                .ok_or_else(|| err(format!("step {i} uses unknown relation '{}'", step.relation)))?;
            let hop = match step.direction {
                Direction::Forward => (rel.src, rel.dst),
                Direction::Inverse => {
                    if !rel.symmetric_closure {
                        return Err(err(format!("step {i} inverts '{}', which has no inverse", rel.name)));
                    }
                    (rel.dst, rel.src)
                }
            };
            hops.push(hop);
        }
        for (i, pair) in hops.windows(2).enumerate() {
            if pair[0].1 != pair[1].0 {
                return Err(err(format!(
                    "steps {i} and {} are incompatible: '{}' ends at {} but '{}' starts at {}",
                    i + 1,
                    self.steps[i].relation,
                    pair[0].1,
                    self.steps[i + 1].relation,
                    pair[1].0
                )));
            }
        }
        let (first, last) = (hops[0].0, hops[hops.len() - 1].1);
        if first != self.anchor || last != self.anchor {
            return Err(err(format!("endpoints {first}..{last} do not both equal the anchor {}", self.anchor)));
        }
        Ok(hops)
    }

    /// True when reversing the steps and flipping every direction yields the
    /// same sequence; such paths have symmetric commuting matrices.
    pub fn is_palindromic(&self) -> bool {
        let n = self.steps.len();
        (0..n).all(|i| {
            let a = &self.steps[i];
            let b = &self.steps[n - 1 - i];
            a.relation == b.relation && a.direction == b.direction.flipped()
        })
    }

    /// Type signature such as `U-C-T-C-U`, when the meta-path resolves.
    pub fn signature(&self, schema: &NetworkSchema) -> Option<String> {
        let hops = self.resolve(schema).ok()?;
        let mut s = String::new();
        s.push(hops[0].0.letter());
        for (_, to) in hops {
            s.push('-');
            s.push(to.letter());
        }
        Some(s)
    }
}

impl fmt::Display for MetaPathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// Commuting matrix of a meta-path over its anchor entities.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAdjacency {
    pub meta_path: MetaPathSpec,
    /// Path-instance counts through binarized step incidences.
    pub counts: Csr<u64>,
    /// `counts > 0` off the diagonal; the diagonal is always empty.
    pub binary: Csr<u64>,
}

impl PathAdjacency {
    pub fn size(&self) -> usize {
        self.counts.rows()
    }
}

/// Multiplies the binarized incidence of each step (transposed for inverse
/// steps). Results are cached on the graph by spec name.
pub fn compose_meta_path(hin: &Hin, spec: &MetaPathSpec) -> Result<Arc<PathAdjacency>> {
    hin.ensure_valid()?;
    spec.resolve(hin.schema())?;
    if let Some(hit) = hin.cached_path(spec) {
        return Ok(hit);
    }
    let mut counts: Option<Csr<u64>> = None;
    for step in &spec.steps {
        let inc = hin.incidence(&step.relation)?;
        let inc = match step.direction {
            Direction::Forward => inc,
            Direction::Inverse => inc.transpose(),
        };
        counts = Some(match counts {
            None => inc,
            Some(acc) => acc.matmul(&inc),
        });
    }
    let counts = counts.expect("resolve rejects empty paths");
    let binary = counts.binarized(1).without_diagonal();
    let adj = Arc::new(PathAdjacency { meta_path: spec.clone(), counts, binary });
    hin.store_path(adj.clone());
    Ok(adj)
}

/// The four user-side meta-paths: `U-K-U`, `U-C-U`, `U-V-U`, `U-C-T-C-U`.
pub fn user_meta_path_catalog() -> Vec<MetaPathSpec> {
    use MetaPathStep as S;
    let u = EntityType::User;
    vec![
        MetaPathSpec::new("MP1", u, vec![S::forward(USER_CLICK_CONCEPT), S::inverse(USER_CLICK_CONCEPT)]),
        MetaPathSpec::new("MP2", u, vec![S::forward(USER_LEARN_COURSE), S::inverse(USER_LEARN_COURSE)]),
        MetaPathSpec::new("MP3", u, vec![S::forward(USER_WATCH_VIDEO), S::inverse(USER_WATCH_VIDEO)]),
        MetaPathSpec::new(
            "MP4",
            u,
            vec![
                S::forward(USER_LEARN_COURSE),
                S::forward(COURSE_TAUGHT_BY_TEACHER),
                S::inverse(COURSE_TAUGHT_BY_TEACHER),
                S::inverse(USER_LEARN_COURSE),
            ],
        ),
    ]
}

/// The three concept-side meta-paths. The direct concept link is carried by
/// co-occurrence inside a video (`K-V-K`).
pub fn concept_meta_path_catalog() -> Vec<MetaPathSpec> {
    use MetaPathStep as S;
    let k = EntityType::Concept;
    vec![
        MetaPathSpec::new("KK", k, vec![S::inverse(VIDEO_INCLUDE_CONCEPT), S::forward(VIDEO_INCLUDE_CONCEPT)]),
        MetaPathSpec::new("KUK", k, vec![S::inverse(USER_CLICK_CONCEPT), S::forward(USER_CLICK_CONCEPT)]),
        MetaPathSpec::new("KCK", k, vec![S::inverse(COURSE_INVOLVE_CONCEPT), S::forward(COURSE_INVOLVE_CONCEPT)]),
    ]
}

pub fn find_meta_path(name: &str) -> Option<MetaPathSpec> {
    user_meta_path_catalog()
        .into_iter()
        .chain(concept_meta_path_catalog())
        .find(|s| s.name.eq_ignore_ascii_case(name.trim()))
}
