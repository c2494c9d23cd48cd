//! Content feature matrices and user context relations.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hin::{EntityType, Hin, COURSE_TAUGHT_BY_TEACHER, USER_CLICK_CONCEPT, USER_LEARN_COURSE, USER_WATCH_VIDEO};
use crate::sparse::Csr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    EmbeddingFile,
    OneHot,
    Hashed,
}

/// Row storage. One-hot features stay implicit so large entity sets do not
/// materialize a dense identity.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureData {
    Identity(usize),
    Dense(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub entity_type: EntityType,
    pub source: FeatureSource,
    pub data: FeatureData,
    /// Rows synthesized by the hashed fallback because the source lacked them.
    pub fallback_rows: usize,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        match &self.data {
            FeatureData::Identity(n) => *n,
            FeatureData::Dense(m) => m.nrows(),
        }
    }

    pub fn width(&self) -> usize {
        match &self.data {
            FeatureData::Identity(n) => *n,
            FeatureData::Dense(m) => m.ncols(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.data {
            FeatureData::Identity(n) => Array2::eye(*n),
            FeatureData::Dense(m) => m.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match &self.data {
            FeatureData::Identity(_) => true,
            FeatureData::Dense(m) => m.iter().all(|v| v.is_finite()),
        }
    }

    pub fn from_dense(entity_type: EntityType, data: Array2<f64>) -> Self {
        FeatureMatrix {
            entity_type,
            source: FeatureSource::EmbeddingFile,
            data: FeatureData::Dense(data),
            fallback_rows: 0,
        }
    }
}

pub fn one_hot_features(entity_type: EntityType, hin: &Hin) -> FeatureMatrix {
    FeatureMatrix {
        entity_type,
        source: FeatureSource::OneHot,
        data: FeatureData::Identity(hin.count(entity_type)),
        fallback_rows: 0,
    }
}

/// Deterministic pseudo-random row in `[-1, 1]^width` keyed by id and seed.
pub fn hashed_row(external_id: &str, width: usize, seed: u64) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(external_id.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..width).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

pub fn hashed_features(entity_type: EntityType, hin: &Hin, width: usize, seed: u64) -> Result<FeatureMatrix> {
    if width == 0 {
        return Err(Error::Config("hashed feature width must be positive".into()));
    }
    let ids = hin.entities(entity_type).ids();
    let mut data = Array2::zeros((ids.len(), width));
    for (i, id) in ids.iter().enumerate() {
        for (j, v) in hashed_row(id, width, seed).into_iter().enumerate() {
            data[[i, j]] = v;
        }
    }
    Ok(FeatureMatrix { entity_type, source: FeatureSource::Hashed, data: FeatureData::Dense(data), fallback_rows: 0 })
}

/// Loads a TSV of `external_id<TAB>v1<TAB>v2...` rows aligned to dense
/// indices. Entities absent from the file get a hashed row of the file's
/// width (or `fallback_width` if the file is empty) keyed by `fallback_seed`.
pub fn load_embedding_features(
    path: &Path,
    entity_type: EntityType,
    hin: &Hin,
    fallback_width: usize,
    fallback_seed: u64,
) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; hin.count(entity_type)];
    let mut width: Option<usize> = None;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().trim();
        let values = fields
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(&file, lineno, format!("non-numeric value '{tok}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::parse(&file, lineno, "row has no values"));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::parse(&file, lineno, format!("width {} differs from {w}", values.len())));
            }
            _ => {}
        }
        let entity =
            hin.lookup(id).filter(|e| e.ty == entity_type).ok_or_else(|| Error::UnknownEntity(id.to_string()))?;
        rows[entity.index] = Some(values);
    }

    let width = width.unwrap_or(fallback_width);
    if width == 0 {
        return Err(Error::Config("embedding fallback width must be positive".into()));
    }
    let ids = hin.entities(entity_type).ids();
    let mut data = Array2::zeros((rows.len(), width));
    let mut fallback_rows = 0;
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.unwrap_or_else(|| {
            fallback_rows += 1;
            hashed_row(&ids[i], width, fallback_seed)
        });
        for (j, v) in row.into_iter().enumerate() {
            data[[i, j]] = v;
        }
    }
    if fallback_rows > 0 {
        log::warn!("{}: {fallback_rows} {entity_type} rows missing, filled by hashed fallback", file);
    }
    Ok(FeatureMatrix {
        entity_type,
        source: FeatureSource::EmbeddingFile,
        data: FeatureData::Dense(data),
        fallback_rows,
    })
}

/// The four binary user context matrices (user rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ContextRelationSet {
    pub r1_user_click_concept: Csr<u64>,
    pub r2_user_learn_course: Csr<u64>,
    pub r3_user_watch_video: Csr<u64>,
    pub r4_user_course_teacher: Csr<u64>,
}

pub fn build_context_relations(hin: &Hin) -> Result<ContextRelationSet> {
    hin.ensure_valid()?;
    for rel in [USER_CLICK_CONCEPT, USER_LEARN_COURSE, USER_WATCH_VIDEO, COURSE_TAUGHT_BY_TEACHER] {
        if hin.schema().relation(rel).is_none() {
            return Err(Error::MissingRelation(rel.to_string()));
        }
    }
    let learn = hin.incidence(USER_LEARN_COURSE)?;
    let taught = hin.incidence(COURSE_TAUGHT_BY_TEACHER)?;
    Ok(ContextRelationSet {
        r1_user_click_concept: hin.incidence(USER_CLICK_CONCEPT)?,
        r2_user_learn_course: learn.clone(),
        r3_user_watch_video: hin.incidence(USER_WATCH_VIDEO)?,
        r4_user_course_teacher: learn.matmul(&taught).binarized(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hin::{HinBuilder, NetworkSchema, RelationType};
    use std::io::Write;

    fn graph() -> Hin {
        let mut b = HinBuilder::mooc();
        for u in ["u0", "u1", "u2"] {
            b.add_entity(EntityType::User, u, "").unwrap();
        }
        for c in ["c0", "c1"] {
            b.add_entity(EntityType::Course, c, "").unwrap();
        }
        b.add_entity(EntityType::Teacher, "t0", "").unwrap();
        b.add_entity(EntityType::Concept, "k0", "c++").unwrap();
        b.add_entity(EntityType::Concept, "k1", "binary tree").unwrap();
        b.add_edge(USER_LEARN_COURSE, "u0", "c0", 1).unwrap();
        b.add_edge(USER_LEARN_COURSE, "u1", "c0", 1).unwrap();
        b.add_edge(USER_LEARN_COURSE, "u1", "c1", 1).unwrap();
        b.add_edge(COURSE_TAUGHT_BY_TEACHER, "c0", "t0", 1).unwrap();
        b.add_edge(COURSE_TAUGHT_BY_TEACHER, "c1", "t0", 1).unwrap();
        b.add_edge(USER_CLICK_CONCEPT, "u0", "k1", 4).unwrap();
        b.build()
    }

    #[test]
    fn one_hot_is_identity() {
        let hin = graph();
        let f = one_hot_features(EntityType::User, &hin);
        let dense = f.to_dense();
        assert_eq!(dense, Array2::<f64>::eye(3));
        assert!(dense.rows().into_iter().all(|r| r.sum() == 1.0));
        let none = one_hot_features(EntityType::Video, &hin);
        assert_eq!((none.rows(), none.width()), (0, 0));
    }

    #[test]
    fn hashed_rows_are_deterministic_and_seeded() {
        let hin = graph();
        let a = hashed_features(EntityType::Concept, &hin, 4, 7).unwrap();
        let b = hashed_features(EntityType::Concept, &hin, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.width(), 4);
        let dense = a.to_dense();
        assert!(dense.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));

        let differing =
            (0..100).filter(|i| hashed_row(&format!("e{i}"), 4, 1) != hashed_row(&format!("e{i}"), 4, 2)).count();
        assert_eq!(differing, 100);
        assert!(hashed_features(EntityType::Concept, &hin, 0, 7).is_err());
    }

    #[test]
    fn embedding_file_aligns_and_falls_back() {
        let hin = graph();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("concepts.tsv");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "k1\t0.5\t-1.5\t2").unwrap();
        drop(f);
        let m = load_embedding_features(&path, EntityType::Concept, &hin, 8, 3).unwrap();
        assert_eq!((m.rows(), m.width()), (2, 3));
        assert_eq!(m.fallback_rows, 1);
        let dense = m.to_dense();
        assert_eq!(dense.row(1).to_vec(), vec![0.5, -1.5, 2.0]);
        assert_eq!(dense.row(0).to_vec(), hashed_row("k0", 3, 3));
    }

    #[test]
    fn empty_embedding_file_uses_fallback_for_all() {
        let hin = graph();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        fs::write(&path, "").unwrap();
        let m = load_embedding_features(&path, EntityType::Concept, &hin, 5, 3).unwrap();
        assert_eq!(m.fallback_rows, 2);
        assert_eq!(m.width(), 5);
    }

    #[test]
    fn embedding_file_errors() {
        let hin = graph();
        let dir = tempfile::tempdir().unwrap();
        let bad_id = dir.path().join("a.tsv");
        fs::write(&bad_id, "k9\t1\t2\n").unwrap();
        let err = load_embedding_features(&bad_id, EntityType::Concept, &hin, 2, 0).unwrap_err();
        assert!(err.to_string().contains("k9"));

        let bad_num = dir.path().join("b.tsv");
        fs::write(&bad_num, "k0\t1\t2\nk1\t1\tx\n").unwrap();
        let err = load_embedding_features(&bad_num, EntityType::Concept, &hin, 2, 0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let bad_width = dir.path().join("c.tsv");
        fs::write(&bad_width, "k0\t1\t2\nk1\t1\n").unwrap();
        let err = load_embedding_features(&bad_width, EntityType::Concept, &hin, 2, 0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn context_relations() {
        let hin = graph();
        let ctx = build_context_relations(&hin).unwrap();
        assert_eq!(ctx.r4_user_course_teacher.get(0, 0), 1);
        // two courses by the same teacher still binarize to 1
        assert_eq!(ctx.r4_user_course_teacher.get(1, 0), 1);
        // u2 has no events anywhere
        for m in [
            &ctx.r1_user_click_concept,
            &ctx.r2_user_learn_course,
            &ctx.r3_user_watch_video,
            &ctx.r4_user_course_teacher,
        ] {
            assert_eq!(m.row_nnz(2), 0);
        }
        assert_eq!(ctx.r1_user_click_concept, hin.incidence(USER_CLICK_CONCEPT).unwrap());
        assert_eq!(ctx.r1_user_click_concept.get(0, 1), 1);
        assert_eq!(ctx.r3_user_watch_video.shape(), (3, 0));
    }

    #[test]
    fn missing_relation_is_named() {
        let mut schema = NetworkSchema::mooc();
        schema.relation_types.retain(|r| r.name != USER_WATCH_VIDEO);
        schema.relation_types.push(RelationType::new("user-rate-course", EntityType::User, EntityType::Course));
        let hin = HinBuilder::new(schema).build();
        let err = build_context_relations(&hin).unwrap_err();
        assert!(err.to_string().contains(USER_WATCH_VIDEO));
    }
}
