//! Normalized propagation, a two-layer graph convolution per meta-path and
//! attention fusion of the per-path outputs.

use kcrec::encoder::{
    attention_scores, forward_side, fuse, gcn_forward, AttentionMode, EncoderParams, GcnStack, NormalizedAdjacency,
    SideGraph,
};
use kcrec::features::FeatureMatrix;
use kcrec::hin::EntityType;
use kcrec::sparse::Csr;
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kcrec::Result<()> {
    let pair = Csr::from_triplets(2, 2, &[(0, 1, 1u64), (1, 0, 1)]);
    println!("P for a single edge:\n{}", NormalizedAdjacency::from_binary(&pair).p.to_dense());

    let chain = Csr::from_triplets(4, 4, &[(0, 1, 1u64), (1, 0, 1), (1, 2, 1), (2, 1, 1), (2, 3, 1), (3, 2, 1)]);
    let star = Csr::from_triplets(4, 4, &[(0, 1, 1u64), (1, 0, 1), (0, 2, 1), (2, 0, 1), (0, 3, 1), (3, 0, 1)]);
    let x = FeatureMatrix::from_dense(EntityType::User, Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 / 4.0));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let stack = GcnStack::glorot(&[3, 4, 2], &mut rng);
    let (h, _) = gcn_forward(&NormalizedAdjacency::from_binary(&chain), &x, &stack)?;
    println!("two-layer output on the chain:\n{h}");

    let graph = SideGraph::from_adjacencies(
        EntityType::User,
        vec![
            ("chain".into(), NormalizedAdjacency::from_binary(&chain)),
            ("star".into(), NormalizedAdjacency::from_binary(&star)),
        ],
        &x,
    )?;
    let params = EncoderParams::init(&graph, &[4], 2, &mut rng);
    let fwd = forward_side(&graph, &params, AttentionMode::PerNode)?;
    println!("attention over {:?}:\n{}", graph.path_names(), fwd.fused.alpha);
    println!("fused representations:\n{}", fwd.fused.e);

    let reps = vec![array![[0.0]], array![[1.0]]];
    let alpha = attention_scores(&reps, &array![1.0].view(), AttentionMode::PerNode);
    println!("tanh-gated softmax of (0, 1): {alpha}");
    println!("fused: {}", fuse(&reps, &alpha).e);
    Ok(())
}
