//! Planted-partition MOOC logs for end-to-end testing.
//!
//! Every entity belongs to one of `blocks` interest groups (`index % blocks`).
//! Users click concepts of their own group with probability `p_in` and other
//! concepts with probability `p_cross`. Courses, videos and teachers are wired
//! inside groups, and each click also produces the matching course enrolment
//! and video view, stamped with the click's time.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetPaths;
use crate::error::{Error, Result};
use crate::hin::{
    COURSE_CONTAIN_VIDEO, COURSE_INVOLVE_CONCEPT, COURSE_TAUGHT_BY_TEACHER, USER_LEARN_COURSE, USER_WATCH_VIDEO,
    VIDEO_INCLUDE_CONCEPT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub concepts: usize,
    pub courses: usize,
    pub videos: usize,
    pub teachers: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_cross: f64,
    pub seed: u64,
    /// Epoch seconds of the first possible click.
    pub start: i64,
    /// Length of the click window in seconds.
    pub horizon: i64,
    /// Fraction of the window before the train/test boundary.
    pub train_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 500,
            concepts: 200,
            courses: 40,
            videos: 120,
            teachers: 12,
            blocks: 4,
            p_in: 0.3,
            p_cross: 0.01,
            seed: 0,
            start: 1_483_228_800,
            horizon: 365 * 86_400,
            train_fraction: 0.8,
        }
    }
}

impl SyntheticSpec {
    pub fn boundary(&self) -> i64 {
        self.start + (self.horizon as f64 * self.train_fraction).round() as i64
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.blocks == 0 {
            return bad("at least one block is required".into());
        }
        for (name, n) in [
            ("users", self.users),
            ("concepts", self.concepts),
            ("courses", self.courses),
            ("videos", self.videos),
            ("teachers", self.teachers),
        ] {
            if n < self.blocks {
                return bad(format!("{name} ({n}) must be at least the block count ({})", self.blocks));
            }
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_cross) {
            return bad("click probabilities must lie in [0, 1]".into());
        }
        if self.p_in <= self.p_cross {
            return bad(format!("within-block probability {} must exceed cross-block {}", self.p_in, self.p_cross));
        }
        if self.horizon <= 0 || !(0.0..=1.0).contains(&self.train_fraction) {
            return bad("horizon must be positive and train_fraction within [0, 1]".into());
        }
        Ok(())
    }

    pub fn block_of(&self, index: usize) -> usize {
        index % self.blocks
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticClick {
    pub user: usize,
    pub concept: usize,
    pub count: u32,
    pub timestamp: i64,
}

/// In-memory corpus; [`SyntheticCorpus::write`] emits the ingestion files.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub course_video: Vec<(usize, usize)>,
    pub course_teacher: Vec<(usize, usize)>,
    pub video_concept: Vec<(usize, usize)>,
    pub course_concept: Vec<(usize, usize)>,
    pub clicks: Vec<SyntheticClick>,
    /// `(user, course, timestamp)` derived from clicks.
    pub learns: Vec<(usize, usize, i64)>,
    /// `(user, video, timestamp)` derived from clicks.
    pub watches: Vec<(usize, usize, i64)>,
}

fn members(n: usize, blocks: usize, b: usize) -> Vec<usize> {
    (b..n).step_by(blocks).collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blocks = spec.blocks;

    let mut course_video = Vec::new();
    let mut course_teacher = Vec::new();
    let mut video_concept = Vec::new();
    for b in 0..blocks {
        let courses = members(spec.courses, blocks, b);
        let videos = members(spec.videos, blocks, b);
        let teachers = members(spec.teachers, blocks, b);
        let concepts = members(spec.concepts, blocks, b);
        for (i, &v) in videos.iter().enumerate() {
            course_video.push((courses[i % courses.len()], v));
        }
        for &c in &courses {
            course_teacher.push((c, *teachers.choose(&mut rng).expect("non-empty block")));
        }
        // Every concept lands in at least one video, plus one random extra per video.
        for (i, &k) in concepts.iter().enumerate() {
            video_concept.push((videos[i % videos.len()], k));
        }
        for &v in &videos {
            video_concept.push((v, *concepts.choose(&mut rng).expect("non-empty block")));
        }
    }
    course_video.sort_unstable();
    course_teacher.sort_unstable();
    video_concept.sort_unstable();
    video_concept.dedup();

    let video_course: Vec<usize> = {
        let mut vc = vec![0; spec.videos];
        for &(c, v) in &course_video {
            vc[v] = c;
        }
        vc
    };
    let mut course_concept: Vec<(usize, usize)> = video_concept.iter().map(|&(v, k)| (video_course[v], k)).collect();
    course_concept.sort_unstable();
    course_concept.dedup();

    let mut concept_videos: Vec<Vec<usize>> = vec![Vec::new(); spec.concepts];
    for &(v, k) in &video_concept {
        concept_videos[k].push(v);
    }

    let mut clicks = Vec::new();
    let mut learns = Vec::new();
    let mut watches = Vec::new();
    for u in 0..spec.users {
        for (k, videos) in concept_videos.iter().enumerate() {
            let p = if spec.block_of(u) == spec.block_of(k) { spec.p_in } else { spec.p_cross };
            if rng.gen::<f64>() >= p {
                continue;
            }
            let timestamp = spec.start + rng.gen_range(0..spec.horizon);
            clicks.push(SyntheticClick { user: u, concept: k, count: rng.gen_range(1..=3), timestamp });
            let v = *videos.choose(&mut rng).expect("every concept has a video");
            watches.push((u, v, timestamp));
            learns.push((u, video_course[v], timestamp));
        }
    }

    Ok(SyntheticCorpus {
        spec: spec.clone(),
        course_video,
        course_teacher,
        video_concept,
        course_concept,
        clicks,
        learns,
        watches,
    })
}

impl SyntheticCorpus {
    /// Fraction of possible same-block pairs that were clicked, and the same
    /// for cross-block pairs.
    pub fn click_rates(&self) -> (f64, f64) {
        let s = &self.spec;
        let mut same = [0usize; 2];
        for c in &self.clicks {
            same[usize::from(s.block_of(c.user) != s.block_of(c.concept))] += 1;
        }
        let mut possible = [0usize; 2];
        for u in 0..s.users {
            for k in 0..s.concepts {
                possible[usize::from(s.block_of(u) != s.block_of(k))] += 1;
            }
        }
        let rate = |i: usize| if possible[i] == 0 { 0.0 } else { same[i] as f64 / possible[i] as f64 };
        (rate(0), rate(1))
    }

    /// Writes `entities.tsv`, `relations.tsv` and `interactions.tsv`.
    pub fn write(&self, dir: &Path) -> Result<DatasetPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let s = &self.spec;
        let mut ents = String::from("external_id\tentity_type\tdisplay_name\n");
        for (prefix, ty, n) in [
            ("u", "user", s.users),
            ("c", "course", s.courses),
            ("v", "video", s.videos),
            ("t", "teacher", s.teachers),
            ("k", "concept", s.concepts),
        ] {
            for i in 0..n {
                let _ = writeln!(ents, "{prefix}{i}\t{ty}\t{ty} {i}");
            }
        }

        let mut rels = String::from("relation_name\tsrc_external_id\tdst_external_id\tcount\ttimestamp_optional\n");
        let mut static_rows = |name: &str, sp: &str, dp: &str, pairs: &[(usize, usize)]| {
            for &(a, b) in pairs {
                let _ = writeln!(rels, "{name}\t{sp}{a}\t{dp}{b}\t1\t");
            }
        };
        static_rows(COURSE_CONTAIN_VIDEO, "c", "v", &self.course_video);
        static_rows(COURSE_TAUGHT_BY_TEACHER, "c", "t", &self.course_teacher);
        static_rows(VIDEO_INCLUDE_CONCEPT, "v", "k", &self.video_concept);
        static_rows(COURSE_INVOLVE_CONCEPT, "c", "k", &self.course_concept);
        for &(u, c, ts) in &self.learns {
            let _ = writeln!(rels, "{USER_LEARN_COURSE}\tu{u}\tc{c}\t1\t{ts}");
        }
        for &(u, v, ts) in &self.watches {
            let _ = writeln!(rels, "{USER_WATCH_VIDEO}\tu{u}\tv{v}\t1\t{ts}");
        }

        let mut inter = String::from("user_id\tconcept_id\tcount\ttimestamp\n");
        for c in &self.clicks {
            let _ = writeln!(inter, "u{}\tk{}\t{}\t{}", c.user, c.concept, c.count, c.timestamp);
        }

        let paths = DatasetPaths::in_dir(dir);
        for (path, body) in [(&paths.entities, ents), (&paths.relations[0], rels), (&paths.interactions, inter)] {
            fs::write(path, body).map_err(|e| Error::io(path, e))?;
        }
        Ok(paths)
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<DatasetPaths> {
    generate(spec)?.write(dir)
}
