//! Tab-separated ingestion, train/test splitting and export.
//!
//! Three inputs make a dataset: an entity manifest
//! (`external_id, entity_type, display_name`), one or more relation files
//! (`relation_name, src_external_id, dst_external_id, count[, timestamp]`)
//! and a click log (`user_id, concept_id, count, timestamp`). Every file
//! starts with a header row. The user-click-concept relation is built from
//! the training part of the click log only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::hin::{EntityType, Hin, HinBuilder, USER_CLICK_CONCEPT};
use crate::train::RatingMatrix;

const ENTITY_HEADER: [&str; 3] = ["external_id", "entity_type", "display_name"];
const RELATION_HEADER: [&str; 5] =
    ["relation_name", "src_external_id", "dst_external_id", "count", "timestamp_optional"];
const INTERACTION_HEADER: [&str; 4] = ["user_id", "concept_id", "count", "timestamp"];

/// Accepts integer epoch seconds, `YYYY-MM-DD`, `YYYY-MM-DD HH:MM:SS` and
/// RFC 3339. Returns epoch seconds (UTC).
pub fn parse_timestamp(s: &str) -> std::result::Result<i64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp());
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Ok(dt.and_utc().timestamp());
    }
    DateTime::parse_from_rfc3339(s).map(|dt| dt.timestamp()).map_err(|_| format!("malformed timestamp '{s}'"))
}

struct TsvRecord {
    line: usize,
    fields: Vec<String>,
}

/// Reads a headed TSV file. Blank lines are skipped; the header must match
/// `header` (a trailing optional column may be omitted).
fn read_tsv(path: &Path, header: &[&str], required: usize) -> Result<Vec<TsvRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, head)) = lines.next() else {
        return Err(Error::parse(&file, 1, "missing header row"));
    };
    let cols: Vec<String> = head.split('\t').map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols.len() < required || cols.len() > header.len() || cols.iter().zip(header).any(|(c, h)| c != h) {
        return Err(Error::parse(&file, hline + 1, format!("expected header '{}'", header.join("\\t"))));
    }
    let width = cols.len();
    let mut out = Vec::new();
    for (i, line) in lines {
        let fields: Vec<String> = line.split('\t').map(|f| f.trim().to_string()).collect();
        if fields.len() < required || fields.len() > width.max(header.len()) {
            return Err(Error::parse(
                &file,
                i + 1,
                format!("expected {width} tab-separated fields, found {}", fields.len()),
            ));
        }
        out.push(TsvRecord { line: i + 1, fields });
    }
    Ok(out)
}

fn parse_count(file: &str, line: usize, s: &str) -> Result<u32> {
    match s.parse::<u32>() {
        Ok(0) => Err(Error::parse(file, line, "count must be at least 1")),
        Ok(v) => Ok(v),
        Err(_) => Err(Error::parse(file, line, format!("invalid count '{s}'"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Events strictly before the boundary train, the rest test.
    Temporal { boundary: i64 },
    /// Each user's most recent click is held out.
    LeaveLastOut,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub entities: PathBuf,
    pub relations: Vec<PathBuf>,
    pub interactions: PathBuf,
}

impl DatasetPaths {
    /// The file names written by [`crate::synthetic::generate_synthetic`].
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            entities: dir.join("entities.tsv"),
            relations: vec![dir.join("relations.tsv")],
            interactions: dir.join("interactions.tsv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickEvent {
    pub user: usize,
    pub concept: usize,
    pub count: u32,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IngestSummary {
    pub entity_counts: BTreeMap<EntityType, usize>,
    pub edge_counts: BTreeMap<String, usize>,
    pub train_events: usize,
    pub test_events: usize,
    pub test_pairs: usize,
    pub dropped_cold_start_users: usize,
    pub dropped_seen_test_pairs: usize,
    pub dropped_late_relation_rows: usize,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (ty, n) in &self.entity_counts {
            writeln!(f, "entities\t{ty}\t{n}")?;
        }
        for (rel, n) in &self.edge_counts {
            writeln!(f, "edges\t{rel}\t{n}")?;
        }
        writeln!(f, "clicks\ttrain\t{}", self.train_events)?;
        writeln!(f, "clicks\ttest\t{}", self.test_events)?;
        writeln!(f, "test_pairs\t{}", self.test_pairs)?;
        writeln!(f, "dropped\tcold_start_users\t{}", self.dropped_cold_start_users)?;
        writeln!(f, "dropped\tseen_test_pairs\t{}", self.dropped_seen_test_pairs)?;
        write!(f, "dropped\tlate_relation_rows\t{}", self.dropped_late_relation_rows)
    }
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub hin: Hin,
    pub train: RatingMatrix,
    /// Distinct held-out `(user, concept)` pairs, sorted.
    pub test: Vec<(usize, usize)>,
    pub split: SplitMode,
    pub summary: IngestSummary,
}

fn read_entities(builder: &mut HinBuilder, path: &Path) -> Result<()> {
    let file = path.display().to_string();
    for rec in read_tsv(path, &ENTITY_HEADER, 2)? {
        let ty: EntityType = rec.fields[1].parse().map_err(|e: Error| Error::parse(&file, rec.line, e.to_string()))?;
        let name = rec.fields.get(2).map(String::as_str).unwrap_or("");
        builder.add_entity(ty, &rec.fields[0], name).map_err(|e| Error::parse(&file, rec.line, e.to_string()))?;
    }
    Ok(())
}

/// Returns the number of rows skipped because they are stamped at or after
/// `cutoff`.
fn read_relations(builder: &mut HinBuilder, path: &Path, cutoff: Option<i64>, allow_clicks: bool) -> Result<usize> {
    let file = path.display().to_string();
    let mut skipped = 0;
    for rec in read_tsv(path, &RELATION_HEADER, 4)? {
        let f = &rec.fields;
        let at = |msg: String| Error::parse(&file, rec.line, msg);
        if f[0] == USER_CLICK_CONCEPT && !allow_clicks {
            return Err(at(format!("'{USER_CLICK_CONCEPT}' rows belong in the interaction file")));
        }
        let count = parse_count(&file, rec.line, &f[3])?;
        if let Some(ts) = f.get(4).filter(|s| !s.is_empty()) {
            let ts = parse_timestamp(ts).map_err(at)?;
            if cutoff.is_some_and(|c| ts >= c) {
                skipped += 1;
                continue;
            }
        }
        let src = builder.lookup(&f[1]).ok_or_else(|| at(format!("unknown entity id '{}'", f[1])))?;
        let dst = builder.lookup(&f[2]).ok_or_else(|| at(format!("unknown entity id '{}'", f[2])))?;
        builder.add_edge_refs(&f[0], src, dst, count).map_err(|e| at(e.to_string()))?;
    }
    Ok(skipped)
}

fn read_interactions(builder: &HinBuilder, path: &Path) -> Result<Vec<ClickEvent>> {
    let file = path.display().to_string();
    let mut out = Vec::new();
    for rec in read_tsv(path, &INTERACTION_HEADER, 4)? {
        let f = &rec.fields;
        let at = |msg: String| Error::parse(&file, rec.line, msg);
        let entity = |id: &str, ty: EntityType| match builder.lookup(id) {
            Some(r) if r.ty == ty => Ok(r.index),
            Some(r) => Err(at(format!("'{id}' is a {}, expected a {ty}", r.ty))),
            None => Err(at(format!("unknown entity id '{id}'"))),
        };
        out.push(ClickEvent {
            user: entity(&f[0], EntityType::User)?,
            concept: entity(&f[1], EntityType::Concept)?,
            count: parse_count(&file, rec.line, &f[2])?,
            timestamp: parse_timestamp(&f[3]).map_err(at)?,
        });
    }
    Ok(out)
}

/// Splits click events; returns `(train, test)` in input order.
fn split_events(events: &[ClickEvent], split: SplitMode) -> (Vec<ClickEvent>, Vec<ClickEvent>) {
    match split {
        SplitMode::Temporal { boundary } => events.iter().cloned().partition(|e| e.timestamp < boundary),
        SplitMode::LeaveLastOut => {
            let mut last: BTreeMap<usize, (i64, usize)> = BTreeMap::new();
            for (i, e) in events.iter().enumerate() {
                let entry = last.entry(e.user).or_insert((e.timestamp, i));
                if (e.timestamp, i) >= *entry {
                    *entry = (e.timestamp, i);
                }
            }
            let held: BTreeSet<(usize, usize)> = last.iter().map(|(&u, &(_, i))| (u, events[i].concept)).collect();
            events.iter().cloned().partition(|e| !held.contains(&(e.user, e.concept)))
        }
    }
}

/// Builds the graph from the manifest and relation files only (no click
/// log). Used to re-read exported graphs.
pub fn load_hin(entities: &Path, relations: &[PathBuf]) -> Result<Hin> {
    let mut builder = HinBuilder::mooc();
    read_entities(&mut builder, entities)?;
    for path in relations {
        read_relations(&mut builder, path, None, true)?;
    }
    let hin = builder.build();
    hin.ensure_valid()?;
    Ok(hin)
}

pub fn ingest(paths: &DatasetPaths, split: SplitMode) -> Result<DatasetBundle> {
    let mut builder = HinBuilder::mooc();
    read_entities(&mut builder, &paths.entities)?;
    let cutoff = match split {
        SplitMode::Temporal { boundary } => Some(boundary),
        SplitMode::LeaveLastOut => None,
    };
    let mut summary = IngestSummary::default();
    for path in &paths.relations {
        summary.dropped_late_relation_rows += read_relations(&mut builder, path, cutoff, false)?;
    }
    let events = read_interactions(&builder, &paths.interactions)?;
    if events.is_empty() {
        return Err(Error::NoTrainingPositives);
    }
    let (train_events, test_events) = split_events(&events, split);
    if train_events.is_empty() {
        return Err(Error::NoTrainingPositives);
    }
    let users = builder.count(EntityType::User);
    let concepts = builder.count(EntityType::Concept);

    let mut ratings: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in &train_events {
        *ratings.entry((e.user, e.concept)).or_insert(0.0) += f64::from(e.count);
        builder.add_edge_refs(
            USER_CLICK_CONCEPT,
            crate::hin::EntityRef { ty: EntityType::User, index: e.user },
            crate::hin::EntityRef { ty: EntityType::Concept, index: e.concept },
            e.count,
        )?;
    }
    let train_users: BTreeSet<usize> = train_events.iter().map(|e| e.user).collect();
    let mut cold: BTreeSet<usize> = BTreeSet::new();
    let mut test: BTreeSet<(usize, usize)> = BTreeSet::new();
    for e in &test_events {
        if !train_users.contains(&e.user) {
            cold.insert(e.user);
        } else if ratings.contains_key(&(e.user, e.concept)) {
            summary.dropped_seen_test_pairs += 1;
        } else {
            test.insert((e.user, e.concept));
        }
    }
    if !cold.is_empty() {
        log::warn!("dropped {} test-only users with no training clicks", cold.len());
    }
    if test.is_empty() {
        log::warn!("test split is empty");
    }

    let hin = builder.build();
    hin.ensure_valid()?;
    summary.entity_counts = hin.entity_counts();
    summary.edge_counts = hin.edge_counts();
    summary.train_events = train_events.len();
    summary.test_events = test_events.len();
    summary.test_pairs = test.len();
    summary.dropped_cold_start_users = cold.len();
    let train = RatingMatrix::new(users, concepts, ratings.into_iter().map(|((u, k), v)| (u, k, v)))?;
    Ok(DatasetBundle { hin, train, test: test.into_iter().collect(), split, summary })
}

/// Writes the graph as `entities.tsv` and `relations.tsv` under `dir`.
pub fn export_hin(hin: &Hin, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut ents = ENTITY_HEADER.join("\t");
    ents.push('\n');
    let mut order: Vec<(EntityType, usize)> = Vec::new();
    for ty in EntityType::ALL {
        for i in 0..hin.count(ty) {
            order.push((ty, i));
        }
    }
    for (ty, i) in order {
        let table = hin.entities(ty);
        ents.push_str(&format!("{}\t{}\t{}\n", table.ids()[i], ty, table.names()[i]));
    }
    let mut rels = RELATION_HEADER[..4].join("\t");
    rels.push('\n');
    for name in hin.relation_names() {
        for e in hin.edges(name) {
            rels.push_str(&format!("{name}\t{}\t{}\t{}\n", hin.external_id(e.src), hin.external_id(e.dst), e.weight));
        }
    }
    let (ep, rp) = (dir.join("entities.tsv"), dir.join("relations.tsv"));
    fs::write(&ep, ents).map_err(|e| Error::io(&ep, e))?;
    fs::write(&rp, rels).map_err(|e| Error::io(&rp, e))?;
    Ok((ep, rp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn fixture(dir: &Path, clicks: &str) -> DatasetPaths {
        let entities = write(
            dir,
            "entities.tsv",
            "external_id\tentity_type\tdisplay_name\n\
             u1\tuser\tAda\nu2\tuser\tBo\nu3\tuser\tCy\n\
             c1\tcourse\tAlgorithms\nv1\tvideo\tTrees\nt1\tteacher\tT\n\
             k1\tconcept\tbinary tree\nk2\tconcept\theap\nk3\tconcept\tgraph\n",
        );
        let relations = write(
            dir,
            "relations.tsv",
            "relation_name\tsrc_external_id\tdst_external_id\tcount\ttimestamp_optional\n\
             user-learn-course\tu1\tc1\t1\t2017-01-01\n\
             user-learn-course\tu2\tc1\t1\t2018-06-01\n\
             course-taught_by-teacher\tc1\tt1\t1\t\n\
             course-contain-video\tc1\tv1\t1\n\
             video-include-concept\tv1\tk1\t1\n",
        );
        let interactions = write(dir, "interactions.tsv", clicks);
        DatasetPaths { entities, relations: vec![relations], interactions }
    }

    const CLICKS: &str = "user_id\tconcept_id\tcount\ttimestamp\n\
        u1\tk1\t2\t2017-03-01\n\
        u1\tk2\t1\t2018-02-01\n\
        u2\tk2\t1\t1500000000\n\
        u2\tk2\t1\t2018-03-01T10:00:00Z\n\
        u2\tk3\t1\t2018-03-02\n\
        u3\tk1\t1\t2018-04-01\n";

    fn boundary() -> i64 {
        parse_timestamp("2018-01-01").unwrap()
    }

    #[test]
    fn timestamp_formats() {
        assert_eq!(parse_timestamp("0").unwrap(), 0);
        assert_eq!(parse_timestamp("1970-01-02").unwrap(), 86_400);
        assert_eq!(parse_timestamp("1970-01-01 00:01:00").unwrap(), 60);
        assert_eq!(parse_timestamp("1970-01-01T01:00:00+01:00").unwrap(), 0);
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn temporal_split() {
        let dir = tempfile::tempdir().unwrap();
        let b = ingest(&fixture(dir.path(), CLICKS), SplitMode::Temporal { boundary: boundary() }).unwrap();
        assert_eq!(b.train.get(0, 0), 2.0);
        assert_eq!(b.train.get(1, 1), 1.0);
        assert_eq!(b.train.nnz(), 2);
        // (u2, k2) was seen in training; u3 has no training clicks.
        assert_eq!(b.test, vec![(0, 1), (1, 2)]);
        assert_eq!(b.summary.dropped_seen_test_pairs, 1);
        assert_eq!(b.summary.dropped_cold_start_users, 1);
        assert_eq!(b.summary.dropped_late_relation_rows, 1);
        assert_eq!(b.hin.edges(USER_CLICK_CONCEPT).len(), 2);
        assert_eq!(b.hin.edges("user-learn-course").len(), 1);
        assert!(b.summary.to_string().contains("entities\tuser\t3"));
    }

    #[test]
    fn leave_last_out_split() {
        let dir = tempfile::tempdir().unwrap();
        let b = ingest(&fixture(dir.path(), CLICKS), SplitMode::LeaveLastOut).unwrap();
        assert_eq!(b.test, vec![(0, 1), (1, 2)]);
        assert_eq!(b.summary.dropped_cold_start_users, 1);
    }

    #[test]
    fn empty_click_log_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path(), "user_id\tconcept_id\tcount\ttimestamp\n");
        let err = ingest(&paths, SplitMode::LeaveLastOut).unwrap_err();
        assert_eq!(err.to_string(), "no training positives");
    }

    #[test]
    fn all_clicks_before_boundary_gives_empty_test() {
        let dir = tempfile::tempdir().unwrap();
        let b = ingest(&fixture(dir.path(), CLICKS), SplitMode::Temporal { boundary: i64::MAX }).unwrap();
        assert!(b.test.is_empty());
    }

    #[test]
    fn unknown_id_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path(), "user_id\tconcept_id\tcount\ttimestamp\nu1\tk1\t1\t5\nu9\tk1\t1\t5\n");
        match ingest(&paths, SplitMode::LeaveLastOut).unwrap_err() {
            Error::Parse { file, line, message } => {
                assert!(file.ends_with("interactions.tsv"));
                assert_eq!(line, 3);
                assert!(message.contains("u9"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_timestamp_and_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path(), "user_id\tconcept_id\tcount\ttimestamp\nu1\tk1\t1\tsoon\n");
        assert!(matches!(ingest(&paths, SplitMode::LeaveLastOut), Err(Error::Parse { line: 2, .. })));
        let paths = fixture(dir.path(), "u1\tk1\t1\t5\n");
        assert!(matches!(ingest(&paths, SplitMode::LeaveLastOut), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = ingest(&fixture(dir.path(), CLICKS), SplitMode::Temporal { boundary: boundary() }).unwrap();
        let out = dir.path().join("export");
        let (e, r) = export_hin(&b.hin, &out).unwrap();
        assert_eq!(load_hin(&e, &[r]).unwrap(), b.hin);
    }
}
