mod common;

use kcrec::encoder::{attention_scores, gcn_forward, AttentionMode, GcnStack, NormalizedAdjacency};
use kcrec::eval::{score_instance, EvalInstance};
use kcrec::features::{build_context_relations, hashed_features, FeatureMatrix};
use kcrec::hin::{
    compose_meta_path, concept_meta_path_catalog, find_meta_path, user_meta_path_catalog, Direction, EntityType, Hin,
    HinBuilder, NetworkSchema, USER_CLICK_CONCEPT,
};
use kcrec::mf::{predict_rating, top_n, MfParams};
use kcrec::sparse::Csr;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct GraphPlan {
    counts: [usize; 5],
    edges: Vec<(usize, usize, usize, u32)>,
}

fn graph_plan() -> impl Strategy<Value = GraphPlan> {
    (prop::array::uniform5(1usize..=8), prop::collection::vec((0usize..7, 0usize..64, 0usize..64, 1u32..4), 0..120))
        .prop_map(|(counts, edges)| GraphPlan { counts, edges })
}

fn build(plan: &GraphPlan, extra: Option<(usize, usize, usize)>) -> Hin {
    let schema = NetworkSchema::mooc();
    let mut b = HinBuilder::mooc();
    for (ty, &n) in EntityType::ALL.iter().zip(&plan.counts) {
        for i in 0..n {
            b.add_entity(*ty, &format!("{}{i}", ty.letter()), "").unwrap();
        }
    }
    let count = |ty: EntityType| plan.counts[EntityType::ALL.iter().position(|t| *t == ty).unwrap()];
    let edges = plan.edges.iter().map(|&(r, s, d, c)| (r, s, d, c)).chain(extra.map(|(r, s, d)| (r, s, d, 1)));
    for (r, s, d, c) in edges {
        let rel = &schema.relation_types[r];
        let src = format!("{}{}", rel.src.letter(), s % count(rel.src));
        let dst = format!("{}{}", rel.dst.letter(), d % count(rel.dst));
        b.add_edge(&rel.name, &src, &dst, c).unwrap();
    }
    b.build()
}

fn all_paths() -> Vec<kcrec::hin::MetaPathSpec> {
    user_meta_path_catalog().into_iter().chain(concept_meta_path_catalog()).collect()
}

fn small_f64() -> impl Strategy<Value = f64> {
    (-8i32..=8).prop_map(|v| v as f64 / 4.0)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(small_f64(), rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn palindromic_paths_are_symmetric(plan in graph_plan()) {
        let hin = build(&plan, None);
        for spec in all_paths() {
            prop_assert!(spec.is_palindromic());
            let adj = compose_meta_path(&hin, &spec).unwrap();
            prop_assert_eq!(&adj.counts, &adj.counts.transpose());
            prop_assert!(adj.binary.is_symmetric());
        }
    }

    #[test]
    fn click_path_is_incidence_times_transpose(plan in graph_plan()) {
        let hin = build(&plan, None);
        let adj = compose_meta_path(&hin, &find_meta_path("MP1").unwrap()).unwrap();
        let r = hin.incidence(USER_CLICK_CONCEPT).unwrap();
        let n = hin.count(EntityType::User);
        for i in 0..n {
            for j in 0..n {
                let shared = (0..r.cols()).filter(|&k| r.get(i, k) > 0 && r.get(j, k) > 0).count() as u64;
                prop_assert_eq!(adj.counts.get(i, j), shared);
                prop_assert_eq!(adj.binary.get(i, j), u64::from(i != j && shared > 0));
            }
        }
    }

    #[test]
    fn adding_an_edge_never_decreases_counts(plan in graph_plan(), extra in (0usize..7, 0usize..64, 0usize..64)) {
        let before = build(&plan, None);
        let after = build(&plan, Some(extra));
        for spec in all_paths() {
            let a = compose_meta_path(&before, &spec).unwrap();
            let b = compose_meta_path(&after, &spec).unwrap();
            for (i, j, v) in a.counts.triplets() {
                prop_assert!(b.counts.get(i, j) >= v);
            }
        }
    }

    #[test]
    fn composition_is_associative(plan in graph_plan()) {
        let hin = build(&plan, None);
        let spec = find_meta_path("MP4").unwrap();
        let steps: Vec<Csr<u64>> = spec
            .steps
            .iter()
            .map(|s| {
                let inc = hin.incidence(&s.relation).unwrap().binarized(1);
                if s.direction == Direction::Forward { inc } else { inc.transpose() }
            })
            .collect();
        let left = steps[0].matmul(&steps[1]).matmul(&steps[2]).matmul(&steps[3]);
        let right = steps[0].matmul(&steps[1].matmul(&steps[2].matmul(&steps[3])));
        let mixed = steps[0].matmul(&steps[1]).matmul(&steps[2].matmul(&steps[3]));
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(&left, &mixed);
        prop_assert_eq!(&compose_meta_path(&hin, &spec).unwrap().counts, &left);
    }

    #[test]
    fn click_context_matches_path_incidence(plan in graph_plan()) {
        let hin = build(&plan, None);
        let ctx = build_context_relations(&hin).unwrap();
        let inc = hin.incidence(USER_CLICK_CONCEPT).unwrap().binarized(1);
        prop_assert_eq!(ctx.r1_user_click_concept.to_dense_counts(), inc.to_dense_counts());
    }

    #[test]
    fn hashed_features_are_finite(plan in graph_plan(), width in 1usize..64, seed in any::<u64>()) {
        let hin = build(&plan, None);
        for ty in EntityType::ALL {
            let f = hashed_features(ty, &hin, width, seed).unwrap();
            prop_assert!(f.to_dense().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn attention_weights_lie_in_unit_interval(
        reps in prop::collection::vec(matrix(6, 3), 1..5),
        a in prop::collection::vec(small_f64(), 3),
    ) {
        let a = Array1::from(a);
        for mode in [AttentionMode::PerNode, AttentionMode::Global] {
            let alpha = attention_scores(&reps, &a.view(), mode);
            prop_assert!(alpha.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn gcn_output_is_nonnegative(seed in any::<u64>(), n in 1usize..20, density in 0.0f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = NormalizedAdjacency::from_binary(&common::random_binary(n, density, true, &mut rng));
        let x = FeatureMatrix::from_dense(EntityType::User, Array2::from_shape_fn((n, 4), |(i, j)| (i as f64 - j as f64) / 3.0));
        let stack = GcnStack::glorot(&[4, 5, 5, 3], &mut rng);
        let (h, _) = gcn_forward(&p, &x, &stack).unwrap();
        prop_assert!(h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn isolated_nodes_transform_independently(x in matrix(3, 2), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = GcnStack::glorot(&[2, 3, 3, 2], &mut rng);
        let features = FeatureMatrix::from_dense(EntityType::Concept, x.clone());
        let (h, _) = gcn_forward(&NormalizedAdjacency::identity(3), &features, &stack).unwrap();
        for i in 0..3 {
            let mut row: Vec<f64> = x.row(i).to_vec();
            for w in &stack.weights {
                row = (0..w.ncols())
                    .map(|c| (0..w.nrows()).map(|r| row[r] * w[[r, c]]).sum::<f64>().max(0.0))
                    .collect();
            }
            for (c, v) in row.iter().enumerate() {
                prop_assert!((h[[i, c]] - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rating_is_linear_in_each_factor(
        x in matrix(2, 3), y in matrix(2, 3), t_u in matrix(2, 2), t_k in matrix(2, 2),
        e_u in matrix(1, 2), e_k in matrix(1, 2), which in 0usize..4,
    ) {
        let params = MfParams { x, y, t_u, t_k, beta_u: 0.75, beta_k: 1.25 };
        let score = |p: &MfParams| predict_rating(p, &e_u.row(0), &e_k.row(0), 1, 0).unwrap();
        let mut zeroed = params.clone();
        let mut doubled = params.clone();
        match which {
            0 => { zeroed.x.row_mut(1).fill(0.0); doubled.x.row_mut(1).mapv_inplace(|v| 2.0 * v); }
            1 => { zeroed.y.row_mut(0).fill(0.0); doubled.y.row_mut(0).mapv_inplace(|v| 2.0 * v); }
            2 => { zeroed.t_u.row_mut(1).fill(0.0); doubled.t_u.row_mut(1).mapv_inplace(|v| 2.0 * v); }
            _ => { zeroed.t_k.row_mut(0).fill(0.0); doubled.t_k.row_mut(0).mapv_inplace(|v| 2.0 * v); }
        }
        let term = score(&params) - score(&zeroed);
        prop_assert!((score(&doubled) - (score(&params) + term)).abs() <= 1e-12);
    }

    #[test]
    fn top_n_is_invariant_under_positive_affine_maps(
        x in matrix(3, 2), y in matrix(12, 2), t_u in matrix(3, 2), t_k in matrix(12, 2),
        e_u in matrix(3, 2), e_k in matrix(12, 1),
        scale_pow in 0u32..4, shift in -4i32..=4, n in 1usize..14,
        exclude in prop::collection::vec(0usize..12, 0..6),
    ) {
        let e_concepts = ndarray::concatenate![ndarray::Axis(1), Array2::ones((12, 1)), e_k];
        let params = MfParams { x, y, t_u, t_k, beta_u: 1.0, beta_k: 2.0 };
        let c = f64::from(1u32 << scale_pow);
        let mut mapped = params.clone();
        mapped.x.mapv_inplace(|v| v * c);
        mapped.t_u.mapv_inplace(|v| v * c);
        mapped.t_k.mapv_inplace(|v| v * c);
        mapped.t_u[[1, 0]] += f64::from(shift) / mapped.beta_k;

        let base = top_n(&params, &e_u, &e_concepts, 1, n, &exclude).unwrap();
        let moved = top_n(&mapped, &e_u, &e_concepts, 1, n, &exclude).unwrap();
        let ids = |t: &kcrec::mf::TopN| t.items.iter().map(|i| i.0).collect::<Vec<_>>();
        prop_assert_eq!(ids(&base), ids(&moved));
        prop_assert!(base.items.iter().all(|(k, _)| *k < 12 && !exclude.contains(k)));
        prop_assert!(base.items.len() <= n);
    }

    #[test]
    fn metrics_survive_monotone_transforms(
        scores in prop::collection::vec(-20i32..20, 2..120),
        offset in 0usize..1000,
    ) {
        let negatives: Vec<usize> = (1..scores.len()).map(|i| (i * 37 + offset) % 5000 + 1).collect();
        let inst = EvalInstance { user: 0, positive: 0, negatives };
        let raw: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
        let warped: Vec<f64> = raw.iter().map(|s| (s / 7.0).exp() * 3.0 + s.powi(3)).collect();
        let a = score_instance(&inst, &raw).unwrap();
        let b = score_instance(&inst, &warped).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hit_ratio_grows_with_k(scores in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 100), 1..30)) {
        let outcomes: Vec<_> = scores
            .iter()
            .map(|s| {
                let inst = EvalInstance { user: 0, positive: 0, negatives: (1..100).collect() };
                score_instance(&inst, s).unwrap()
            })
            .collect();
        let r = kcrec::eval::MetricReport::aggregate(&outcomes);
        prop_assert!(r.hr1 <= r.hr5 && r.hr5 <= r.hr10 && r.hr10 <= r.hr20);
        prop_assert!(outcomes.iter().all(|o| kcrec::eval::hr_at_k(o.rank, 100) == 1.0));
    }

    #[test]
    fn sparse_product_matches_dense(
        a in prop::collection::vec((0usize..6, 0usize..5, 1u64..5), 0..20),
        b in prop::collection::vec((0usize..5, 0usize..7, 1u64..5), 0..20),
    ) {
        let (sa, sb) = (Csr::from_triplets(6, 5, &a), Csr::from_triplets(5, 7, &b));
        let dense = sa.to_f64().to_dense().dot(&sb.to_f64().to_dense());
        prop_assert_eq!(sa.matmul(&sb).to_f64().to_dense(), dense);
    }
}
