//! Scoring with the extended factorization and top-N selection.

use kcrec::mf::{predict_rating, top_n, MfParams};
use ndarray::{array, Array2};

fn main() -> kcrec::Result<()> {
    let params = MfParams {
        x: array![[1.0, 0.0], [0.0, 1.0]],
        y: array![[0.9, 0.1], [0.2, 0.8], [0.5, 0.5], [0.1, 0.1]],
        t_u: Array2::zeros((2, 3)),
        t_k: array![[0.1, 0.0, 0.0], [0.0, 0.2, 0.0], [0.0, 0.0, 0.3], [0.0, 0.0, 0.0]],
        beta_u: 1.0,
        beta_k: 1.0,
    };
    let e_users = array![[1.0, 1.0, 1.0], [0.0, 0.0, 2.0]];
    let e_concepts = Array2::zeros((4, 3));

    for u in 0..2 {
        let scores: Vec<String> = (0..4)
            .map(|k| predict_rating(&params, &e_users.row(u), &e_concepts.row(k), u, k).map(|s| format!("{s:.2}")))
            .collect::<kcrec::Result<_>>()?;
        println!("user {u} scores: {}", scores.join(" "));
        let top = top_n(&params, &e_users, &e_concepts, u, 2, &[0])?;
        println!("user {u} top-2 excluding concept 0: {:?}", top.items);
    }
    Ok(())
}
