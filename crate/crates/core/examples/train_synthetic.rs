//! Generates the planted four-block corpus, trains on it and prints the
//! loss curve and ranking metrics.
//!
//! cargo run --release --example train_synthetic -- [seed] [key=value ...]

use std::time::Instant;

use kcrec::dataset::SplitMode;
use kcrec::experiment::{run_experiment, ExperimentConfig};
use kcrec::synthetic::{generate_synthetic, SyntheticSpec};

fn main() -> kcrec::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let dir = tempfile::tempdir().expect("temporary directory");
    let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
    generate_synthetic(&spec, dir.path())?;

    let mut cfg = ExperimentConfig::default().with_data_dir(dir.path());
    cfg.split = SplitMode::Temporal { boundary: spec.boundary() };
    cfg.arch.width = 32;
    cfg.arch.layers = 2;
    cfg.arch.factors = 16;
    cfg.train.epochs = 30;
    cfg.train.batch_size = 1024;
    cfg.train.learning_rate = 1.0;
    cfg.train.seed = seed;
    for kv in args {
        let (k, v) = kv.split_once('=').expect("overrides look like key=value");
        cfg.set(k, v)?;
    }

    let start = Instant::now();
    let outcome = run_experiment(&cfg)?;
    println!("initial loss {:.4}", outcome.training.initial_loss);
    for e in &outcome.training.epochs {
        println!("epoch {:>3}  loss {:.4}  {} ms", e.epoch, e.loss, e.wall_ms);
    }
    print!("{}", outcome.report.to_tsv());
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
