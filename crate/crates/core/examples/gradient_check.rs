//! Compares analytic gradients against central finite differences on a
//! tiny random model.

use kcrec::encoder::{AttentionMode, NormalizedAdjacency, SideGraph};
use kcrec::features::FeatureMatrix;
use kcrec::hin::EntityType;
use kcrec::model::{Architecture, Model, ModelGraphs, ModelParams};
use kcrec::sparse::Csr;
use kcrec::train::{backward, loss, Objective, TrainSample};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn side(ty: EntityType, n: usize, rng: &mut ChaCha8Rng) -> kcrec::Result<SideGraph> {
    let mut channels = Vec::new();
    for name in ["p0", "p1"] {
        let edges: Vec<(usize, usize, u64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i < j)
            .filter(|_| rng.gen_bool(0.5))
            .flat_map(|(i, j)| [(i, j, 1), (j, i, 1)])
            .collect();
        channels.push((name.to_string(), NormalizedAdjacency::from_binary(&Csr::from_triplets(n, n, &edges))));
    }
    let x = Array2::from_shape_fn((n, 4), |_| rng.gen_range(-1.0..1.0));
    SideGraph::from_adjacencies(ty, channels, &FeatureMatrix::from_dense(ty, x))
}

fn main() -> kcrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let graphs =
        ModelGraphs { user: side(EntityType::User, 5, &mut rng)?, concept: side(EntityType::Concept, 5, &mut rng)? };
    let arch = Architecture {
        width: 3,
        layers: 3,
        hidden: vec![],
        factors: 2,
        attention: AttentionMode::PerNode,
        mf_init_scale: 0.5,
    };
    let params = ModelParams::init(&graphs, &arch, 5)?;
    let model = Model { graphs, params, attention: AttentionMode::PerNode };
    let batch: Vec<TrainSample> =
        (0..6).map(|i| TrainSample { user: i % 5, concept: (i * 3) % 5, target: (i % 3) as f64 }).collect();
    let objective = Objective::default();

    let fwd = model.forward()?;
    let grads = backward(&batch, &model, &fwd, &objective)?;
    let h = 1e-5;

    let numeric = |perturb: &dyn Fn(&mut Model, f64)| -> kcrec::Result<f64> {
        let (mut plus, mut minus) = (model.clone(), model.clone());
        perturb(&mut plus, h);
        perturb(&mut minus, -h);
        Ok((loss(&batch, &plus, &objective)? - loss(&batch, &minus, &objective)?) / (2.0 * h))
    };

    let argmax = |a: &Array2<f64>| {
        a.indexed_iter().max_by(|x, y| x.1.abs().total_cmp(&y.1.abs())).map(|(ix, _)| ix).unwrap_or((0, 0))
    };
    let (w0, w2) = (argmax(&grads.user.stacks[0][0]), argmax(&grads.concept.stacks[1][2]));
    let (xi, tk) = (argmax(&grads.mf.x), argmax(&grads.mf.t_k));
    let att = grads.user.attention.iter().enumerate().max_by(|x, y| x.1.abs().total_cmp(&y.1.abs())).map_or(0, |p| p.0);

    let checks: Vec<(String, f64, f64)> = vec![
        (
            format!("user p0 W0{w0:?}"),
            grads.user.stacks[0][0][w0],
            numeric(&|m, d| m.params.user.stacks[0].weights[0][w0] += d)?,
        ),
        (
            format!("concept p1 W2{w2:?}"),
            grads.concept.stacks[1][2][w2],
            numeric(&|m, d| m.params.concept.stacks[1].weights[2][w2] += d)?,
        ),
        (
            format!("user attention[{att}]"),
            grads.user.attention[att],
            numeric(&|m, d| m.params.user.attention[att] += d)?,
        ),
        (format!("x{xi:?}"), grads.mf.x[xi], numeric(&|m, d| m.params.mf.x[xi] += d)?),
        (format!("t_k{tk:?}"), grads.mf.t_k[tk], numeric(&|m, d| m.params.mf.t_k[tk] += d)?),
        ("beta_u".into(), grads.mf.beta_u, numeric(&|m, d| m.params.mf.beta_u += d)?),
    ];
    for (name, analytic, fd) in checks {
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-12);
        println!("{name:<26} analytic {analytic:>+.8e}  numeric {fd:>+.8e}  rel err {rel:.1e}");
    }
    Ok(())
}
