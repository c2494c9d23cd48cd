//! Sweeps the number of graph convolution layers on a small synthetic
//! corpus and prints the resulting CSV.

use kcrec::dataset::SplitMode;
use kcrec::experiment::{sweep, sweep_csv, worker_cap, ExperimentConfig, SweepAxis};
use kcrec::synthetic::{generate_synthetic, SyntheticSpec};

fn main() -> kcrec::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let spec = SyntheticSpec {
        users: 120,
        concepts: 120,
        courses: 16,
        videos: 40,
        teachers: 8,
        seed: 3,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, dir.path())?;

    let mut cfg = ExperimentConfig::default().with_data_dir(dir.path());
    cfg.split = SplitMode::Temporal { boundary: spec.boundary() };
    cfg.arch.width = 16;
    cfg.arch.factors = 8;
    cfg.train.learning_rate = 1.0;
    cfg.train.batch_size = 512;
    cfg.train.epochs = 10;

    let rows = sweep(&cfg, &SweepAxis::layers(), worker_cap())?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
