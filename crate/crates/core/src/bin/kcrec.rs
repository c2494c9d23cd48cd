use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kcrec::experiment::{
    describe_graph, evaluate_checkpoint, recommend, run_experiment, sweep, sweep_csv, worker_cap, write_atomic,
    ExperimentConfig, SweepAxis,
};
use kcrec::hin::{find_meta_path, EntityType};
use kcrec::model::Checkpoint;
use kcrec::synthetic::{generate_synthetic, SyntheticSpec};
use kcrec::{Error, Result};

#[derive(Parser)]
#[command(name = "kcrec", version, about = "Knowledge-concept recommendation over a heterogeneous MOOC graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Feature mode: s, r, s+r or h.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated meta-path names (MP1..MP4 for users, KK/KUK/KCK for concepts).
    #[arg(long = "meta-paths")]
    meta_paths: Option<String>,
    /// Sampled negatives per evaluation instance.
    #[arg(long)]
    negatives: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a dataset and print entity, relation and meta-path statistics.
    BuildGraph(Common),
    /// Write a planted-block synthetic corpus plus a matching config.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        concepts: usize,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 0.3)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_cross: f64,
    },
    /// Train and evaluate; writes report, checkpoint and training log.
    Train(Common),
    /// Re-evaluate a checkpoint on the configured dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Top-N concepts per user from a checkpoint.
    Recommend {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated user external ids; defaults to every user.
        #[arg(long)]
        users: Option<String>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Output TSV file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment per point of an axis: factors, d, layers or meta_paths.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out = Some(out.clone());
    }
    if let Some(mode) = &c.mode {
        cfg.train.mode = mode.parse()?;
    }
    if let Some(list) = &c.meta_paths {
        let (mut users, mut concepts) = (Vec::new(), Vec::new());
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let spec = find_meta_path(name).ok_or_else(|| Error::Config(format!("unknown meta-path '{name}'")))?;
            match spec.anchor {
                EntityType::User => users.push(spec.name),
                _ => concepts.push(spec.name),
            }
        }
        if !users.is_empty() {
            cfg.user_paths = users;
        }
        if !concepts.is_empty() {
            cfg.concept_paths = concepts;
        }
    }
    if let Some(n) = c.negatives {
        cfg.eval_negatives = n;
    }
    for kv in &c.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn require_out(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.out.clone().ok_or_else(|| Error::Config("an output directory is required (--out)".into()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildGraph(c) => {
            let cfg = load_config(&c)?;
            let (bundle, paths) = describe_graph(&cfg)?;
            let text = format!("{}\n{paths}", bundle.summary);
            print!("{text}");
            if let Some(out) = &cfg.out {
                write_atomic(&out.join("graph_summary.tsv"), text.as_bytes())?;
            }
        }
        Command::GenSynthetic { out, seed, users, concepts, blocks, p_in, p_cross } => {
            let spec = SyntheticSpec { seed, users, concepts, blocks, p_in, p_cross, ..SyntheticSpec::default() };
            generate_synthetic(&spec, &out)?;
            let conf = format!(
                "data.dir = .\nsplit.boundary = {}\nseed = {seed}\nout = run\n\
                 model.d = 32\nmodel.layers = 2\nmodel.factors = 16\n\
                 train.epochs = 30\ntrain.batch_size = 1024\ntrain.learning_rate = 1\n",
                spec.boundary()
            );
            write_atomic(&out.join("experiment.conf"), conf.as_bytes())?;
            println!("wrote {}", out.display());
        }
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            require_out(&cfg)?;
            let outcome = run_experiment(&cfg)?;
            print!("{}", outcome.report.to_tsv());
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let out = require_out(&cfg)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let report = evaluate_checkpoint(&cfg, &ckpt)?;
            write_atomic(&out.join("report.tsv"), report.to_tsv().as_bytes())?;
            write_atomic(&out.join("report.json"), report.to_json().as_bytes())?;
            print!("{}", report.to_tsv());
        }
        Command::Recommend { checkpoint, users, n, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let users: Vec<String> = match users {
                Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                None => ckpt.user_ids.clone(),
            };
            let tsv = recommend(&ckpt, &users, n)?;
            match out {
                Some(path) => write_atomic(&path, tsv.as_bytes())?,
                None => print!("{tsv}"),
            }
        }
        Command::Sweep { common, axis } => {
            let cfg = load_config(&common)?;
            let out = require_out(&cfg)?;
            let axis = SweepAxis::from_name(&axis)?;
            let rows = sweep(&cfg, &axis, worker_cap())?;
            let csv = sweep_csv(&rows);
            write_atomic(&out.join(format!("sweep-{}.csv", axis.name())), csv.as_bytes())?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
