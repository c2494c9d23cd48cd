//! Content features from an embedding file with hashed fallback rows,
//! plus the user context-relation matrices.

use std::fs;

use kcrec::features::{build_context_relations, hashed_features, load_embedding_features, one_hot_features};
use kcrec::hin::{EntityType, HinBuilder};

fn main() -> kcrec::Result<()> {
    let mut b = HinBuilder::mooc();
    for u in ["u0", "u1"] {
        b.add_entity(EntityType::User, u, "")?;
    }
    b.add_entity(EntityType::Course, "c0", "")?;
    b.add_entity(EntityType::Teacher, "t0", "")?;
    b.add_entity(EntityType::Video, "v0", "")?;
    for k in ["k0", "k1", "k2"] {
        b.add_entity(EntityType::Concept, k, "")?;
    }
    b.add_edge("user-click-concept", "u0", "k0", 2)?;
    b.add_edge("user-learn-course", "u0", "c0", 1)?;
    b.add_edge("user-watch-video", "u1", "v0", 1)?;
    b.add_edge("course-taught_by-teacher", "c0", "t0", 1)?;
    b.add_edge("course-contain-video", "c0", "v0", 1)?;
    b.add_edge("video-include-concept", "v0", "k1", 1)?;
    b.add_edge("course-involve-concept", "c0", "k2", 1)?;
    let hin = b.build();

    let dir = tempfile::tempdir().expect("temporary directory");
    let file = dir.path().join("concepts.tsv");
    fs::write(&file, "k0\t0.5\t-0.25\t1.0\nk2\t0.0\t0.75\t-1.0\n").expect("write embeddings");
    let concepts = load_embedding_features(&file, EntityType::Concept, &hin, 3, 7)?;
    println!("concept features ({} hashed fallback rows):\n{}", concepts.fallback_rows, concepts.to_dense());

    let hashed = hashed_features(EntityType::Concept, &hin, 4, 7)?;
    println!("hashed concept features:\n{}", hashed.to_dense());
    println!("one-hot user features:\n{}", one_hot_features(EntityType::User, &hin).to_dense());

    let ctx = build_context_relations(&hin)?;
    println!("R1 user-click-concept:\n{:?}", ctx.r1_user_click_concept.to_dense_counts());
    println!("R4 user-course-teacher:\n{:?}", ctx.r4_user_course_teacher.to_dense_counts());
    Ok(())
}
