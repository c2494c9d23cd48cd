//! Experiment configuration and the end-to-end runner: ingest, features,
//! graphs, training, evaluation and artifact output, plus parameter sweeps
//! and top-N recommendation from a checkpoint.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{ingest, parse_timestamp, DatasetBundle, DatasetPaths, IngestSummary, SplitMode};
use crate::encoder::AttentionMode;
use crate::error::{Error, Result};
use crate::eval::{build_eval_instances, evaluate, EvalInstance, MetricReport, DEFAULT_NEGATIVES};
use crate::features::{hashed_features, load_embedding_features, one_hot_features, FeatureMatrix};
use crate::hin::{compose_meta_path, find_meta_path, EntityType, Hin, MetaPathSpec};
use crate::mf::top_n;
use crate::model::{Architecture, Checkpoint, Model, ModelGraphs, ModelParams};
use crate::train::{train_with, LossMode, RegNorm, TrainConfig, TrainOutcome};

/// Environment variable capping sweep parallelism.
pub const WORKERS_ENV: &str = "KCREC_WORKERS";

const EVAL_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    OneHot,
    Hashed { width: usize, seed: u64 },
    Embedding(PathBuf),
}

impl FeatureSpec {
    fn parse(value: &str, base: &Path) -> Result<Self> {
        let v = value.trim();
        if v == "one_hot" {
            return Ok(FeatureSpec::OneHot);
        }
        if let Some(rest) = v.strip_prefix("hashed:") {
            let mut parts = rest.split(':');
            let width = parts.next().and_then(|w| w.parse().ok());
            let seed = parts.next().map_or(Some(0), |s| s.parse().ok());
            if let (Some(width), Some(seed), None) = (width, seed, parts.next()) {
                return Ok(FeatureSpec::Hashed { width, seed });
            }
        }
        if let Some(path) = v.strip_prefix("embedding:") {
            return Ok(FeatureSpec::Embedding(base.join(path)));
        }
        Err(Error::Config(format!(
            "feature source '{v}' is not one of one_hot, hashed:<width>:<seed>, embedding:<path>"
        )))
    }

    fn render(&self) -> String {
        match self {
            FeatureSpec::OneHot => "one_hot".into(),
            FeatureSpec::Hashed { width, seed } => format!("hashed:{width}:{seed}"),
            FeatureSpec::Embedding(p) => format!("embedding:{}", p.display()),
        }
    }

    pub fn build(&self, ty: EntityType, hin: &Hin) -> Result<FeatureMatrix> {
        match self {
            FeatureSpec::OneHot => Ok(one_hot_features(ty, hin)),
            FeatureSpec::Hashed { width, seed } => hashed_features(ty, hin, *width, *seed),
            FeatureSpec::Embedding(path) => load_embedding_features(path, ty, hin, 64, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub entities: Option<PathBuf>,
    pub relations: Vec<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub split: SplitMode,
    pub user_features: FeatureSpec,
    pub concept_features: FeatureSpec,
    pub user_paths: Vec<String>,
    pub concept_paths: Vec<String>,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub checkpoint_every: usize,
    pub eval_negatives: usize,
    pub out: Option<PathBuf>,
    base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            entities: None,
            relations: Vec::new(),
            interactions: None,
            split: SplitMode::LeaveLastOut,
            user_features: FeatureSpec::OneHot,
            concept_features: FeatureSpec::Hashed { width: 64, seed: 0 },
            user_paths: vec!["MP1".into(), "MP2".into(), "MP3".into(), "MP4".into()],
            concept_paths: vec!["KK".into(), "KUK".into(), "KCK".into()],
            arch: Architecture::default(),
            train: TrainConfig::default(),
            checkpoint_every: 0,
            eval_negatives: DEFAULT_NEGATIVES,
            out: None,
            base_dir: PathBuf::new(),
        }
    }
}

/// Every recognised key, in the order used by [`ExperimentConfig::resolved`].
pub const CONFIG_KEYS: &[&str] = &[
    "data.entities",
    "data.relations",
    "data.interactions",
    "split",
    "split.boundary",
    "features.user.source",
    "features.concept.source",
    "meta_paths.user",
    "meta_paths.concept",
    "model.d",
    "model.layers",
    "model.hidden",
    "model.factors",
    "model.attention",
    "model.init_scale",
    "mode",
    "seed",
    "train.learning_rate",
    "train.lambda",
    "train.epochs",
    "train.batch_size",
    "train.negatives",
    "train.clip_norm",
    "train.reg_norm",
    "train.loss",
    "train.freeze_beta",
    "train.log1p",
    "train.checkpoint_every",
    "eval.negatives",
    "out",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn opt_path(base: &Path, v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| base.join(v))
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl ExperimentConfig {
    /// Points all three inputs at the files of a generated corpus directory.
    pub fn with_data_dir(mut self, dir: &Path) -> Self {
        let paths = DatasetPaths::in_dir(dir);
        self.entities = Some(paths.entities);
        self.relations = paths.relations;
        self.interactions = Some(paths.interactions);
        self
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// taken relative to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            ..Default::default()
        };
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(origin, i + 1, "expected 'key = value'"))?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let base = self.base_dir.clone();
        match key {
            "data.dir" => *self = std::mem::take(self).with_data_dir(&base.join(value)),
            "data.entities" => self.entities = opt_path(&base, value),
            "data.relations" => self.relations = split_list(value).iter().map(|p| base.join(p)).collect(),
            "data.interactions" => self.interactions = opt_path(&base, value),
            "split" => {
                self.split = match value {
                    "leave_last_out" => SplitMode::LeaveLastOut,
                    "temporal" => match self.split {
                        s @ SplitMode::Temporal { .. } => s,
                        SplitMode::LeaveLastOut => SplitMode::Temporal { boundary: i64::MAX },
                    },
                    other => return Err(Error::Config(format!("split: unknown mode '{other}'"))),
                }
            }
            "split.boundary" => {
                let boundary = parse_timestamp(value).map_err(Error::Config)?;
                self.split = SplitMode::Temporal { boundary };
            }
            "features.user.source" => self.user_features = FeatureSpec::parse(value, &base)?,
            "features.concept.source" => self.concept_features = FeatureSpec::parse(value, &base)?,
            "meta_paths.user" => self.user_paths = split_list(value),
            "meta_paths.concept" => self.concept_paths = split_list(value),
            "model.d" => self.arch.width = parse_num(key, value)?,
            "model.layers" => self.arch.layers = parse_num(key, value)?,
            "model.hidden" => {
                self.arch.hidden = split_list(value).iter().map(|w| parse_num(key, w)).collect::<Result<_>>()?
            }
            "model.factors" => self.arch.factors = parse_num(key, value)?,
            "model.attention" => {
                self.arch.attention = match value {
                    "per_node" => AttentionMode::PerNode,
                    "global" => AttentionMode::Global,
                    other => return Err(Error::Config(format!("model.attention: unknown '{other}'"))),
                }
            }
            "model.init_scale" => self.arch.mf_init_scale = parse_num(key, value)?,
            "mode" => self.train.mode = value.parse()?,
            "seed" => self.train.seed = parse_num(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "train.lambda" => self.train.objective.lambda = parse_num(key, value)?,
            "train.epochs" => self.train.epochs = parse_num(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, value)?,
            "train.negatives" => self.train.negatives_per_positive = parse_num(key, value)?,
            "train.clip_norm" => self.train.clip_norm = parse_num(key, value)?,
            "train.reg_norm" => {
                self.train.objective.reg_norm = match value {
                    "euclidean" => RegNorm::Euclidean,
                    "squared" => RegNorm::Squared,
                    other => return Err(Error::Config(format!("train.reg_norm: unknown '{other}'"))),
                }
            }
            "train.loss" => {
                self.train.loss = match value {
                    "sampled" => LossMode::Sampled,
                    "full_grid" => LossMode::FullGrid,
                    other => return Err(Error::Config(format!("train.loss: unknown '{other}'"))),
                }
            }
            "train.freeze_beta" => self.train.freeze_beta = parse_bool(key, value)?,
            "train.log1p" => self.train.objective.log1p_targets = parse_bool(key, value)?,
            "train.checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "eval.negatives" => self.eval_negatives = parse_num(key, value)?,
            "out" => self.out = opt_path(&base, value),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let join = |v: &[String]| v.join(",");
        match key {
            "data.entities" => path(&self.entities),
            "data.relations" => self.relations.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
            "data.interactions" => path(&self.interactions),
            "split" => match self.split {
                SplitMode::Temporal { .. } => "temporal".into(),
                SplitMode::LeaveLastOut => "leave_last_out".into(),
            },
            "split.boundary" => match self.split {
                SplitMode::Temporal { boundary } => boundary.to_string(),
                SplitMode::LeaveLastOut => String::new(),
            },
            "features.user.source" => self.user_features.render(),
            "features.concept.source" => self.concept_features.render(),
            "meta_paths.user" => join(&self.user_paths),
            "meta_paths.concept" => join(&self.concept_paths),
            "model.d" => self.arch.width.to_string(),
            "model.layers" => self.arch.layers.to_string(),
            "model.hidden" => self.arch.hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            "model.factors" => self.arch.factors.to_string(),
            "model.attention" => match self.arch.attention {
                AttentionMode::PerNode => "per_node".into(),
                AttentionMode::Global => "global".into(),
            },
            "model.init_scale" => self.arch.mf_init_scale.to_string(),
            "mode" => self.train.mode.as_str().into(),
            "seed" => self.train.seed.to_string(),
            "train.learning_rate" => self.train.learning_rate.to_string(),
            "train.lambda" => self.train.objective.lambda.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.negatives" => self.train.negatives_per_positive.to_string(),
            "train.clip_norm" => self.train.clip_norm.to_string(),
            "train.reg_norm" => match self.train.objective.reg_norm {
                RegNorm::Euclidean => "euclidean".into(),
                RegNorm::Squared => "squared".into(),
            },
            "train.loss" => match self.train.loss {
                LossMode::Sampled => "sampled".into(),
                LossMode::FullGrid => "full_grid".into(),
            },
            "train.freeze_beta" => self.train.freeze_beta.to_string(),
            "train.log1p" => self.train.objective.log1p_targets.to_string(),
            "train.checkpoint_every" => self.checkpoint_every.to_string(),
            "eval.negatives" => self.eval_negatives.to_string(),
            "out" => path(&self.out),
            _ => String::new(),
        }
    }

    /// The fully resolved configuration in `key = value` form.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }

    fn resolve_paths(names: &[String], anchor: EntityType) -> Result<Vec<MetaPathSpec>> {
        names
            .iter()
            .map(|n| {
                let spec = find_meta_path(n).ok_or_else(|| Error::Config(format!("unknown meta-path '{n}'")))?;
                if spec.anchor != anchor {
                    return Err(Error::Config(format!("meta-path '{n}' does not connect {anchor} entities")));
                }
                Ok(spec)
            })
            .collect()
    }

    pub fn user_meta_paths(&self) -> Result<Vec<MetaPathSpec>> {
        Self::resolve_paths(&self.user_paths, EntityType::User)
    }

    pub fn concept_meta_paths(&self) -> Result<Vec<MetaPathSpec>> {
        Self::resolve_paths(&self.concept_paths, EntityType::Concept)
    }

    pub fn check(&self) -> Result<()> {
        self.arch.check()?;
        if !(1..=400).contains(&self.arch.width) || !(1..=400).contains(&self.arch.factors) {
            return Err(Error::Config("model.d and model.factors must lie within 1..=400".into()));
        }
        self.train.check()?;
        if self.user_paths.is_empty() || self.concept_paths.is_empty() {
            return Err(Error::Config("both sides need at least one meta-path".into()));
        }
        self.user_meta_paths()?;
        self.concept_meta_paths()?;
        if self.eval_negatives == 0 {
            return Err(Error::Config("eval.negatives must be positive".into()));
        }
        if let SplitMode::Temporal { boundary: i64::MAX } = self.split {
            return Err(Error::Config("temporal split needs split.boundary".into()));
        }
        self.dataset_paths().map(|_| ())
    }

    pub fn dataset_paths(&self) -> Result<DatasetPaths> {
        match (&self.entities, &self.interactions) {
            (Some(e), Some(i)) if !self.relations.is_empty() => {
                Ok(DatasetPaths { entities: e.clone(), relations: self.relations.clone(), interactions: i.clone() })
            }
            _ => Err(Error::Config("data.entities, data.relations and data.interactions are required".into())),
        }
    }
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn build_features(cfg: &ExperimentConfig, hin: &Hin) -> Result<(FeatureMatrix, FeatureMatrix)> {
    Ok((cfg.user_features.build(EntityType::User, hin)?, cfg.concept_features.build(EntityType::Concept, hin)?))
}

pub fn build_graphs(cfg: &ExperimentConfig, hin: &Hin) -> Result<ModelGraphs> {
    let (uf, kf) = build_features(cfg, hin)?;
    ModelGraphs::build(hin, &uf, &kf, &cfg.user_meta_paths()?, &cfg.concept_meta_paths()?, cfg.train.mode)
}

pub fn eval_instances(cfg: &ExperimentConfig, bundle: &DatasetBundle) -> Result<Vec<EvalInstance>> {
    build_eval_instances(&bundle.train, &bundle.test, cfg.eval_negatives, cfg.seed() ^ EVAL_SEED_SALT).map_err(|e| {
        match e {
            Error::NotEnoughNegatives { user, available, requested } => {
                let id = user
                    .parse::<usize>()
                    .ok()
                    .and_then(|u| bundle.hin.entities(EntityType::User).ids().get(u).cloned())
                    .unwrap_or(user);
                Error::NotEnoughNegatives { user: id, available, requested }
            }
            other => other,
        }
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: MetricReport,
    pub summary: IngestSummary,
    pub training: TrainOutcome,
    pub checkpoint: Checkpoint,
}

fn train_log(outcome: &TrainOutcome) -> String {
    let mut s = String::from("epoch\tloss\twall_ms\n");
    let _ = writeln!(s, "0\t{}\t0", outcome.initial_loss);
    for e in &outcome.epochs {
        let _ = writeln!(s, "{}\t{}\t{}", e.epoch, e.loss, e.wall_ms);
    }
    s
}

/// Runs the whole pipeline. When `cfg.out` is set, the report (JSON and
/// TSV), checkpoint, training log, ingestion summary and resolved config are
/// written there once everything has succeeded.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.check()?;
    let paths = cfg.dataset_paths()?;
    let bundle = ingest(&paths, cfg.split).map_err(|e| e.in_stage("ingest"))?;
    let (uf, kf) = build_features(cfg, &bundle.hin).map_err(|e| e.in_stage("features"))?;
    let graphs =
        ModelGraphs::build(&bundle.hin, &uf, &kf, &cfg.user_meta_paths()?, &cfg.concept_meta_paths()?, cfg.train.mode)
            .map_err(|e| e.in_stage("encode"))?;
    let params = ModelParams::init(&graphs, &cfg.arch, cfg.seed()).map_err(|e| e.in_stage("encode"))?;
    let model = Model { graphs, params, attention: cfg.arch.attention };
    let instances = eval_instances(cfg, &bundle).map_err(|e| e.in_stage("evaluate"))?;

    let history = bundle.train.histories();
    let every = cfg.checkpoint_every;
    let training = train_with(&model, &bundle.train, &cfg.train, |record, params| {
        if every == 0 || record.epoch % every != 0 {
            return Ok(());
        }
        let Some(out) = &cfg.out else { return Ok(()) };
        let snapshot = Model { graphs: model.graphs.clone(), params: params.clone(), attention: model.attention };
        let fwd = snapshot.forward()?;
        let ckpt = Checkpoint::capture(&snapshot, &fwd, &bundle.hin, history.clone(), cfg.seed(), cfg.train.mode);
        write_atomic(&out.join(format!("checkpoint-epoch{}.json", record.epoch)), ckpt.to_json()?.as_bytes())
    })
    .map_err(|e| e.in_stage("train"))?;

    let trained = Model { graphs: model.graphs, params: training.params.clone(), attention: model.attention };
    let fwd = trained.forward().map_err(|e| e.in_stage("evaluate"))?;
    let report = evaluate(&trained.params.mf, fwd.user_repr(), fwd.concept_repr(), &instances)
        .map_err(|e| e.in_stage("evaluate"))?;
    let checkpoint = Checkpoint::capture(&trained, &fwd, &bundle.hin, history, cfg.seed(), cfg.train.mode);

    if let Some(out) = &cfg.out {
        let write = |name: &str, body: &str| write_atomic(&out.join(name), body.as_bytes());
        (|| {
            write("checkpoint.json", &checkpoint.to_json()?)?;
            write("train.log", &train_log(&training))?;
            write("summary.tsv", &format!("{}\n", bundle.summary))?;
            write("config.resolved", &cfg.resolved())?;
            write("report.tsv", &report.to_tsv())?;
            write("report.json", &report.to_json())
        })()
        .map_err(|e| e.in_stage("write"))?;
    }
    Ok(ExperimentOutcome { report, summary: bundle.summary, training, checkpoint })
}

/// Re-evaluates a checkpoint on the dataset named by `cfg`.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, checkpoint: &Checkpoint) -> Result<MetricReport> {
    let bundle = ingest(&cfg.dataset_paths()?, cfg.split).map_err(|e| e.in_stage("ingest"))?;
    if bundle.hin.entities(EntityType::User).ids() != checkpoint.user_ids.as_slice()
        || bundle.hin.entities(EntityType::Concept).ids() != checkpoint.concept_ids.as_slice()
    {
        return Err(Error::Checkpoint("checkpoint entities do not match the dataset".into()));
    }
    let instances = eval_instances(cfg, &bundle).map_err(|e| e.in_stage("evaluate"))?;
    let (eu, ek) = checkpoint.representations()?;
    evaluate(&checkpoint.mf_params()?, &eu, &ek, &instances).map_err(|e| e.in_stage("evaluate"))
}

/// Top-`n` lists as TSV rows `user_external_id, rank, concept_external_id,
/// score`. Training clicks are excluded. Unknown users produce an `error`
/// row and the remaining users are still served.
pub fn recommend(checkpoint: &Checkpoint, users: &[String], n: usize) -> Result<String> {
    let mf = checkpoint.mf_params()?;
    let (eu, ek) = checkpoint.representations()?;
    let mut out = String::from("user_external_id\trank\tconcept_external_id\tscore\n");
    for id in users {
        let Some(u) = checkpoint.user_ids.iter().position(|x| x == id) else {
            let _ = writeln!(out, "{id}\terror\tunknown user id\t");
            continue;
        };
        let top = top_n(&mf, &eu, &ek, u, n, &checkpoint.history[u])?;
        for (rank, (k, score)) in top.items.iter().enumerate() {
            let _ = writeln!(out, "{id}\t{}\t{}\t{score}", rank + 1, checkpoint.concept_ids[*k]);
        }
    }
    Ok(out)
}

/// Meta-path statistics for a dataset: one row per selected path.
pub fn describe_graph(cfg: &ExperimentConfig) -> Result<(DatasetBundle, String)> {
    let bundle = ingest(&cfg.dataset_paths()?, cfg.split)?;
    let mut s = String::from("meta_path\tsignature\tnodes\tlinks\n");
    for spec in cfg.user_meta_paths()?.into_iter().chain(cfg.concept_meta_paths()?) {
        let adj = compose_meta_path(&bundle.hin, &spec)?;
        let sig = spec.signature(bundle.hin.schema()).unwrap_or_default();
        let _ = writeln!(s, "{}\t{sig}\t{}\t{}", spec.name, adj.size(), adj.binary.nnz());
    }
    Ok((bundle, s))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Factors(Vec<usize>),
    Width(Vec<usize>),
    Layers(Vec<usize>),
    MetaPaths(Vec<Vec<String>>),
}

/// Every non-empty subset of `names`, smallest first, each size in
/// lexicographic order.
pub fn path_subsets(names: &[&str]) -> Vec<Vec<String>> {
    fn rec(names: &[&str], size: usize, start: usize, cur: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..names.len() {
            cur.push(names[i].to_string());
            rec(names, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 1..=names.len() {
        rec(names, size, 0, &mut Vec::new(), &mut out);
    }
    out
}

impl SweepAxis {
    pub fn factors() -> Self {
        SweepAxis::Factors(vec![10, 20, 30, 40])
    }

    pub fn width() -> Self {
        SweepAxis::Width(vec![20, 50, 100, 150, 200])
    }

    pub fn layers() -> Self {
        SweepAxis::Layers(vec![1, 2, 3, 4])
    }

    /// The fifteen user-side combinations of the four meta-paths.
    pub fn meta_paths() -> Self {
        SweepAxis::MetaPaths(path_subsets(&["MP1", "MP2", "MP3", "MP4"]))
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Factors(_) => "factors",
            SweepAxis::Width(_) => "d",
            SweepAxis::Layers(_) => "layers",
            SweepAxis::MetaPaths(_) => "meta_paths",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "factors" | "D" => Ok(Self::factors()),
            "d" | "width" => Ok(Self::width()),
            "layers" | "L" => Ok(Self::layers()),
            "meta_paths" => Ok(Self::meta_paths()),
            other => Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        }
    }

    /// `(label, config)` for every point on the axis.
    pub fn points(&self, template: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let mut out = Vec::new();
        let mut push = |label: String, f: &dyn Fn(&mut ExperimentConfig)| {
            let mut cfg = template.clone();
            f(&mut cfg);
            let safe: String = label.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
            cfg.out = template.out.as_ref().map(|o| o.join(format!("{}-{safe}", self.name())));
            out.push((label, cfg));
        };
        match self {
            SweepAxis::Factors(v) => v.iter().for_each(|&x| push(x.to_string(), &|c| c.arch.factors = x)),
            SweepAxis::Width(v) => v.iter().for_each(|&x| push(x.to_string(), &|c| c.arch.width = x)),
            SweepAxis::Layers(v) => v.iter().for_each(|&x| {
                push(x.to_string(), &|c| {
                    c.arch.layers = x;
                    c.arch.hidden.clear();
                })
            }),
            SweepAxis::MetaPaths(v) => {
                v.iter().for_each(|paths| push(paths.join("&"), &|c| c.user_paths = paths.clone()))
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: String,
    pub result: std::result::Result<MetricReport, String>,
}

/// Worker cap from the environment, defaulting to the available cores.
pub fn worker_cap() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One isolated experiment per axis point. Failures are recorded in their
/// row and do not stop the sweep.
pub fn sweep(template: &ExperimentConfig, axis: &SweepAxis, workers: usize) -> Result<Vec<SweepRow>> {
    let points = axis.points(template);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let rows = pool.install(|| {
        points
            .par_iter()
            .map(|(label, cfg)| {
                let result = run_experiment(cfg).map(|o| o.report).map_err(|e| {
                    log::warn!("sweep point {label} failed: {e}");
                    e.to_string()
                });
                SweepRow { axis: axis.name(), value: label.clone(), result }
            })
            .collect()
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s =
        String::from("axis,value,status,hr@1,hr@5,hr@10,hr@20,ndcg@5,ndcg@10,ndcg@20,mrr,auc,n_instances,error\n");
    for row in rows {
        match &row.result {
            Ok(r) => {
                let values: Vec<String> = r.entries().into_iter().map(|(_, v)| v).collect();
                let _ = writeln!(s, "{},{},ok,{},", row.axis, row.value, values.join(","));
            }
            Err(e) => {
                let msg = e.replace(['"', '\n'], "'");
                let _ = writeln!(s, "{},{},failed,,,,,,,,,,,\"{msg}\"", row.axis, row.value);
            }
        }
    }
    s
}
