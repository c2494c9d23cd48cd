//! Composes every catalog meta-path on a generated corpus and prints the
//! commuting-matrix statistics, then shows a small matrix in full.

use kcrec::hin::{
    compose_meta_path, concept_meta_path_catalog, user_meta_path_catalog, EntityType, HinBuilder, MetaPathSpec,
    MetaPathStep,
};
use kcrec::synthetic::{generate, SyntheticSpec};

fn main() -> kcrec::Result<()> {
    let spec =
        SyntheticSpec { users: 60, concepts: 24, courses: 8, videos: 16, teachers: 4, ..SyntheticSpec::default() };
    let dir = tempfile::tempdir().expect("temporary directory");
    let paths = generate(&spec)?.write(dir.path())?;
    let hin = kcrec::dataset::load_hin(&paths.entities, &paths.relations)?;
    // The click relation normally comes from the interaction log; load_hin
    // above skips it, so MP1 and KUK are empty here.
    for mp in user_meta_path_catalog().iter().chain(&concept_meta_path_catalog()) {
        let adj = compose_meta_path(&hin, mp)?;
        println!(
            "{:<4} {:<10} nodes {:>3}  path pairs {:>5}  linked pairs {:>5}",
            mp.name,
            mp.signature(hin.schema()).unwrap_or_default(),
            adj.size(),
            adj.counts.nnz(),
            adj.binary.nnz()
        );
    }

    let mut b = HinBuilder::mooc();
    for u in ["u0", "u1", "u2"] {
        b.add_entity(EntityType::User, u, "")?;
    }
    for c in ["c0", "c1"] {
        b.add_entity(EntityType::Course, c, "")?;
    }
    b.add_edge("user-learn-course", "u0", "c0", 1)?;
    b.add_edge("user-learn-course", "u1", "c0", 5)?;
    b.add_edge("user-learn-course", "u1", "c1", 1)?;
    b.add_edge("user-learn-course", "u2", "c1", 1)?;
    let hin = b.build();
    let ucu = MetaPathSpec::new(
        "U-C-U",
        EntityType::User,
        vec![MetaPathStep::forward("user-learn-course"), MetaPathStep::inverse("user-learn-course")],
    );
    let adj = compose_meta_path(&hin, &ucu)?;
    println!("\nU-C-U path counts:\n{:?}", adj.counts.to_dense_counts());
    println!("binary adjacency (diagonal dropped):\n{:?}", adj.binary.to_dense_counts());
    Ok(())
}
