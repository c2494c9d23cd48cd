mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use kcrec::dataset::{export_hin, ingest, load_hin, SplitMode};
use kcrec::encoder::AttentionMode;
use kcrec::experiment::{evaluate_checkpoint, recommend, run_experiment, sweep, ExperimentConfig, SweepAxis};
use kcrec::hin::{EntityType, Hin};
use kcrec::model::{Architecture, Checkpoint, FeatureMode};
use kcrec::synthetic::{generate_synthetic, SyntheticSpec};
use kcrec::train::{train, Objective, RatingMatrix, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_corpus(dir: &Path, seed: u64) -> ExperimentConfig {
    let spec = SyntheticSpec {
        users: 120,
        concepts: 120,
        courses: 16,
        videos: 40,
        teachers: 6,
        seed,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, dir).unwrap();
    let mut cfg = ExperimentConfig::default().with_data_dir(dir);
    cfg.split = SplitMode::Temporal { boundary: spec.boundary() };
    cfg.arch.width = 12;
    cfg.arch.layers = 2;
    cfg.arch.factors = 6;
    cfg.train.epochs = 6;
    cfg.train.batch_size = 512;
    cfg.train.learning_rate = 1.0;
    cfg.train.seed = seed;
    cfg
}

type GraphSnapshot = (BTreeMap<EntityType, Vec<String>>, BTreeMap<String, Vec<(String, String, u32)>>);

fn graph_snapshot(hin: &Hin) -> GraphSnapshot {
    let entities = EntityType::ALL.iter().map(|&t| (t, hin.entities(t).ids().to_vec())).collect();
    let edges = hin
        .relation_names()
        .map(|rel| {
            let mut list: Vec<(String, String, u32)> = hin
                .edges(rel)
                .iter()
                .map(|e| (hin.external_id(e.src).to_string(), hin.external_id(e.dst).to_string(), e.weight))
                .collect();
            list.sort();
            (rel.to_string(), list)
        })
        .collect();
    (entities, edges)
}

#[test]
fn ingested_graph_survives_export_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus(dir.path(), 2);
    let bundle = ingest(&cfg.dataset_paths().unwrap(), cfg.split).unwrap();
    let (entities, relations) = export_hin(&bundle.hin, &dir.path().join("export")).unwrap();
    let reloaded = load_hin(&entities, &[relations]).unwrap();
    assert_eq!(graph_snapshot(&bundle.hin), graph_snapshot(&reloaded));
    assert!(!bundle.hin.edges("user-click-concept").is_empty());
}

fn random_ratings(users: usize, concepts: usize, n: usize, seed: u64) -> RatingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = BTreeMap::new();
    while pairs.len() < n {
        pairs.insert((rng.gen_range(0..users), rng.gen_range(0..concepts)), f64::from(rng.gen_range(1..4)));
    }
    RatingMatrix::new(users, concepts, pairs.into_iter().map(|((u, k), r)| (u, k, r))).unwrap()
}

fn small_train_config(lambda: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1.0,
        epochs: 20,
        batch_size: 64,
        seed: 3,
        objective: Objective { lambda, ..Objective::default() },
        ..TrainConfig::default()
    }
}

fn small_model() -> kcrec::model::Model {
    let arch = Architecture {
        width: 8,
        layers: 2,
        hidden: vec![],
        factors: 8,
        attention: AttentionMode::PerNode,
        mf_init_scale: 0.1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    common::random_model(40, 30, 2, &arch, 9, &mut rng)
}

#[test]
fn two_hundred_interactions_halve_the_loss_in_twenty_epochs() {
    let ratings = random_ratings(40, 30, 200, 1);
    let outcome = train(&small_model(), &ratings, &small_train_config(1e-4)).unwrap();
    assert_eq!(outcome.epochs.len(), 20);
    let increases = outcome.epochs.windows(2).filter(|w| w[1].loss > w[0].loss).count();
    assert!(increases < 20);
    assert!(
        outcome.final_loss() < 0.5 * outcome.initial_loss,
        "loss {} -> {}",
        outcome.initial_loss,
        outcome.final_loss()
    );
}

#[test]
fn stronger_regularization_never_grows_the_factors() {
    let ratings = random_ratings(40, 30, 200, 1);
    let model = small_model();
    let norms: Vec<f64> = [0.0, 1e-3, 1e-1]
        .iter()
        .map(|&lambda| train(&model, &ratings, &small_train_config(lambda)).unwrap().params.regularized_norm())
        .collect();
    assert!(norms[0] >= norms[1] && norms[1] >= norms[2], "{norms:?}");
}

#[test]
fn checkpoint_round_trip_is_byte_identical_and_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(&dir.path().join("data"), 5);
    cfg.out = Some(dir.path().join("run"));
    cfg.checkpoint_every = 3;
    let outcome = run_experiment(&cfg).unwrap();

    let path = dir.path().join("run/checkpoint.json");
    let text = fs::read_to_string(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.to_json().unwrap(), text);
    assert_eq!(loaded, outcome.checkpoint);
    assert!(dir.path().join("run/checkpoint-epoch3.json").exists());
    assert!(dir.path().join("run/checkpoint-epoch6.json").exists());

    assert_eq!(evaluate_checkpoint(&cfg, &loaded).unwrap(), outcome.report);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/report.json")).unwrap()).unwrap();
    let keys: Vec<&str> = report.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected =
        vec!["hr@1", "hr@5", "hr@10", "hr@20", "ndcg@5", "ndcg@10", "ndcg@20", "mrr", "auc", "n_instances"];
    expected.sort_unstable();
    let mut keys = keys;
    keys.sort_unstable();
    assert_eq!(keys, expected);

    let log = fs::read_to_string(dir.path().join("run/train.log")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.len(), cfg.train.epochs + 1);
    assert!(rows.iter().all(|r| r.split('\t').count() == 3));
}

#[test]
fn recommendations_skip_history_and_flag_unknown_users() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus(dir.path(), 6);
    let ckpt = run_experiment(&cfg).unwrap().checkpoint;
    let users = vec![ckpt.user_ids[0].clone(), "ghost".to_string(), ckpt.user_ids[1].clone()];
    let tsv = recommend(&ckpt, &users, 5).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some("user_external_id\trank\tconcept_external_id\tscore"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[5], vec!["ghost", "error", "unknown user id", ""]);
    for row in rows.iter().filter(|r| r[1] != "error") {
        let u = ckpt.user_ids.iter().position(|id| id == row[0]).unwrap();
        let k = ckpt.concept_ids.iter().position(|id| id == row[2]).unwrap();
        assert!(!ckpt.history[u].contains(&k));
    }
    let scores: Vec<f64> = rows[..5].iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn every_feature_mode_trains_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_corpus(dir.path(), 7);
    for mode in
        [FeatureMode::ContentOnly, FeatureMode::ContextOnly, FeatureMode::ContentPlusContext, FeatureMode::Homogeneous]
    {
        let mut cfg = base.clone();
        cfg.train.mode = mode;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.report.n_instances > 0, "{mode:?}");
        assert!(out.training.final_loss() < out.training.initial_loss, "{mode:?}");
        assert_eq!(out.checkpoint.mode, mode);
    }
}

#[test]
fn leave_last_out_split_gives_one_test_pair_per_user() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(dir.path(), 8);
    cfg.split = SplitMode::LeaveLastOut;
    let bundle = ingest(&cfg.dataset_paths().unwrap(), cfg.split).unwrap();
    let mut users: Vec<usize> = bundle.test.iter().map(|p| p.0).collect();
    users.dedup();
    assert_eq!(users.len(), bundle.test.len());
    assert!(bundle.test.iter().all(|&(u, k)| !bundle.train.contains(u, k)));
    assert!(run_experiment(&cfg).unwrap().report.n_instances > 0);
}

#[test]
fn factor_sweep_reports_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(dir.path(), 9);
    cfg.train.epochs = 2;
    let rows = sweep(&cfg, &SweepAxis::factors(), 2).unwrap();
    let values: Vec<&str> = rows.iter().map(|r| r.value.as_str()).collect();
    assert_eq!(values, ["10", "20", "30", "40"]);
    assert!(rows.iter().all(|r| r.result.is_ok()));
}

fn kcrec(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kcrec")).args(args).output().unwrap()
}

#[test]
fn failing_commands_exit_nonzero_and_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ok = kcrec(&["gen-synthetic", "--out", data.to_str().unwrap(), "--users", "60", "--concepts", "150"]);
    assert!(ok.status.success());
    let conf = data.join("experiment.conf");
    let conf = conf.to_str().unwrap();

    let cases: [&[&str]; 5] = [
        &["--meta-paths", "MP9"],
        &["--negatives", "100000"],
        &["--mode", "x"],
        &["--set", "train.learning_rate=-1"],
        &["--set", "data.interactions=missing.tsv"],
    ];
    for (i, extra) in cases.iter().enumerate() {
        let out = dir.path().join(format!("fail-{i}"));
        let mut args =
            vec!["train", "--config", conf, "--out", out.to_str().unwrap(), "--set", "train.checkpoint_every=1"];
        args.extend_from_slice(extra);
        let result = kcrec(&args);
        assert!(!result.status.success(), "{extra:?} should fail");
        assert!(String::from_utf8_lossy(&result.stderr).starts_with("error:"), "{extra:?}");
        let leftovers = fs::read_dir(&out).map(|d| d.count()).unwrap_or(0);
        assert_eq!(leftovers, 0, "{extra:?} left files behind");
    }

    let missing = kcrec(&["recommend", "--checkpoint", dir.path().join("nope.json").to_str().unwrap()]);
    assert!(!missing.status.success());
    let no_out = kcrec(&["train", "--config", conf, "--out", ""]);
    assert!(!no_out.status.success());
}
