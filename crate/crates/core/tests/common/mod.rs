#![allow(dead_code)]

use std::path::Path;

use kcrec::dataset::SplitMode;
use kcrec::encoder::{AttentionMode, NormalizedAdjacency, SideGraph};
use kcrec::experiment::ExperimentConfig;
use kcrec::features::FeatureMatrix;
use kcrec::hin::EntityType;
use kcrec::model::{Architecture, Model, ModelGraphs, ModelParams};
use kcrec::sparse::Csr;
use kcrec::synthetic::{generate_synthetic, SyntheticSpec};
use ndarray::Array2;
use rand::Rng;

/// Writes the planted-block corpus for `seed` into `dir` and returns a
/// config tuned for it.
pub fn synthetic_config(dir: &Path, seed: u64) -> ExperimentConfig {
    let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
    generate_synthetic(&spec, dir).expect("synthetic corpus");
    let mut cfg = ExperimentConfig::default().with_data_dir(dir);
    cfg.split = SplitMode::Temporal { boundary: spec.boundary() };
    cfg.arch.width = 32;
    cfg.arch.layers = 2;
    cfg.arch.factors = 16;
    cfg.train.epochs = 30;
    cfg.train.batch_size = 1024;
    cfg.train.learning_rate = 1.0;
    cfg.train.seed = seed;
    cfg
}

/// Symmetric 0/1 adjacency with edge probability `p`, optionally with
/// stray diagonal entries.
pub fn random_binary<R: Rng>(n: usize, p: f64, diagonal: bool, rng: &mut R) -> Csr<u64> {
    let mut t = Vec::new();
    for i in 0..n {
        if diagonal && rng.gen_bool(0.2) {
            t.push((i, i, 1));
        }
        for j in i + 1..n {
            if rng.gen_bool(p) {
                t.push((i, j, 1));
                t.push((j, i, 1));
            }
        }
    }
    Csr::from_triplets(n, n, &t)
}

pub fn random_side<R: Rng>(ty: EntityType, n: usize, paths: usize, features: usize, rng: &mut R) -> SideGraph {
    let channels = (0..paths)
        .map(|p| (format!("p{p}"), NormalizedAdjacency::from_binary(&random_binary(n, 0.5, false, rng))))
        .collect();
    let x = Array2::from_shape_fn((n, features), |_| rng.gen_range(-1.0..1.0));
    SideGraph::from_adjacencies(ty, channels, &FeatureMatrix::from_dense(ty, x)).expect("side graph")
}

/// A random model with `paths` meta-paths per side.
pub fn random_model<R: Rng>(
    users: usize,
    concepts: usize,
    paths: usize,
    arch: &Architecture,
    seed: u64,
    rng: &mut R,
) -> Model {
    let graphs = ModelGraphs {
        user: random_side(EntityType::User, users, paths, 4, rng),
        concept: random_side(EntityType::Concept, concepts, paths, 4, rng),
    };
    let params = ModelParams::init(&graphs, arch, seed).expect("params");
    Model { graphs, params, attention: arch.attention }
}

pub fn small_arch(attention: AttentionMode) -> Architecture {
    Architecture { width: 3, layers: 3, hidden: vec![], factors: 2, attention, mf_init_scale: 0.5 }
}

/// Adds `delta` to entry `i` (row-major) of the tensor named as in
/// `GradientBundle::tensors`.
pub fn perturb(model: &mut Model, name: &str, i: usize, delta: f64) {
    let p = &mut model.params;
    let parts: Vec<&str> = name.split('.').collect();
    let slot: &mut f64 = match parts.as_slice() {
        [side, "attention"] => {
            let side = if *side == "user" { &mut p.user } else { &mut p.concept };
            &mut side.attention[i]
        }
        [side, path, layer] => {
            let side = if *side == "user" { &mut p.user } else { &mut p.concept };
            let pi: usize = path.trim_start_matches("path").parse().expect("path index");
            let li: usize = layer.trim_start_matches('W').parse().expect("layer index");
            let w = &mut side.stacks[pi].weights[li];
            let cols = w.ncols();
            &mut w[[i / cols, i % cols]]
        }
        ["mf", "beta_u"] => &mut p.mf.beta_u,
        ["mf", "beta_k"] => &mut p.mf.beta_k,
        ["mf", m] => {
            let t = match *m {
                "x" => &mut p.mf.x,
                "y" => &mut p.mf.y,
                "t_u" => &mut p.mf.t_u,
                "t_k" => &mut p.mf.t_k,
                other => panic!("unknown tensor mf.{other}"),
            };
            let cols = t.ncols();
            &mut t[[i / cols, i % cols]]
        }
        _ => panic!("unknown tensor {name}"),
    };
    *slot += delta;
}
