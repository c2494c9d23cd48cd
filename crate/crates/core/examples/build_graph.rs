//! Builds a small MOOC graph by hand, validates it and prints its shape.

use kcrec::hin::{validate_schema, EntityType, HinBuilder, USER_CLICK_CONCEPT, USER_LEARN_COURSE};

fn main() -> kcrec::Result<()> {
    let mut b = HinBuilder::mooc();
    for (ty, id, name) in [
        (EntityType::User, "alice", "Alice"),
        (EntityType::User, "bob", "Bob"),
        (EntityType::Course, "ds101", "Data Structures"),
        (EntityType::Teacher, "prof-lee", "Prof. Lee"),
        (EntityType::Video, "ds101-v1", "Trees, part 1"),
        (EntityType::Concept, "binary-tree", "binary tree"),
        (EntityType::Concept, "heap", "heap"),
    ] {
        b.add_entity(ty, id, name)?;
    }
    b.add_edge(USER_LEARN_COURSE, "alice", "ds101", 1)?;
    b.add_edge(USER_LEARN_COURSE, "bob", "ds101", 1)?;
    b.add_edge(USER_CLICK_CONCEPT, "alice", "binary-tree", 3)?;
    b.add_edge(USER_CLICK_CONCEPT, "bob", "heap", 1)?;
    b.add_edge("course-taught_by-teacher", "ds101", "prof-lee", 1)?;
    b.add_edge("course-contain-video", "ds101", "ds101-v1", 1)?;
    b.add_edge("video-include-concept", "ds101-v1", "binary-tree", 1)?;
    b.add_edge("video-include-concept", "ds101-v1", "heap", 1)?;

    // Mismatched endpoint types are refused at insertion time.
    if let Err(e) = b.add_edge(USER_LEARN_COURSE, "alice", "heap", 1) {
        println!("rejected: {e}");
    }

    let hin = b.build();
    let report = validate_schema(&hin);
    println!("valid: {}", report.is_valid());
    for (ty, n) in hin.entity_counts() {
        println!("{ty:>8}: {n}");
    }
    for (rel, n) in hin.edge_counts() {
        println!("{rel:>26}: {n} edges");
    }
    println!("user x concept incidence:\n{:?}", hin.incidence(USER_CLICK_CONCEPT)?.to_dense_counts());
    Ok(())
}
