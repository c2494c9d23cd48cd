//! Trains on a small synthetic corpus, saves the checkpoint, reloads it and
//! prints top-5 lists for a few users.

use kcrec::dataset::SplitMode;
use kcrec::experiment::{recommend, run_experiment, ExperimentConfig};
use kcrec::model::Checkpoint;
use kcrec::synthetic::{generate_synthetic, SyntheticSpec};

fn main() -> kcrec::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let spec =
        SyntheticSpec { users: 120, concepts: 120, courses: 16, videos: 40, teachers: 8, ..SyntheticSpec::default() };
    generate_synthetic(&spec, &dir.path().join("data"))?;

    let mut cfg = ExperimentConfig::default().with_data_dir(&dir.path().join("data"));
    cfg.split = SplitMode::Temporal { boundary: spec.boundary() };
    cfg.arch.width = 16;
    cfg.arch.layers = 2;
    cfg.arch.factors = 8;
    cfg.train.learning_rate = 1.0;
    cfg.train.batch_size = 512;
    cfg.train.epochs = 20;
    cfg.out = Some(dir.path().join("run"));
    let outcome = run_experiment(&cfg)?;
    println!("hr@10 {:.3} over {} instances", outcome.report.hr10, outcome.report.n_instances);

    let ckpt = Checkpoint::load(&dir.path().join("run/checkpoint.json"))?;
    let users = ["u0".to_string(), "u1".to_string(), "nobody".to_string()];
    print!("{}", recommend(&ckpt, &users, 5)?);
    Ok(())
}
