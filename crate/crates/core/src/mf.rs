//! Extended matrix factorization scorer.
//!
//! `r(u, k) = x_u . y_k + beta_u (e_u . t_k) + beta_k (t_u . e_k)` where `e_u`,
//! `e_k` are the fused graph representations and `t_u`, `t_k` per-entity
//! bridge vectors mapping them into a shared space.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MfParams {
    /// `m x D` user latent factors.
    pub x: Array2<f64>,
    /// `n x D` concept latent factors.
    pub y: Array2<f64>,
    /// `m x d` user bridge vectors.
    pub t_u: Array2<f64>,
    /// `n x d` concept bridge vectors.
    pub t_k: Array2<f64>,
    pub beta_u: f64,
    pub beta_k: f64,
}

impl MfParams {
    pub fn zeros(users: usize, concepts: usize, factors: usize, width: usize) -> Self {
        MfParams {
            x: Array2::zeros((users, factors)),
            y: Array2::zeros((concepts, factors)),
            t_u: Array2::zeros((users, width)),
            t_k: Array2::zeros((concepts, width)),
            beta_u: 0.0,
            beta_k: 0.0,
        }
    }

    /// Small uniform factors in `[-scale, scale]`, bridge scales at 1.
    pub fn init<R: Rng>(users: usize, concepts: usize, factors: usize, width: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = |r, c| Array2::from_shape_fn((r, c), |_| rng.gen_range(-scale..=scale));
        MfParams {
            x: draw(users, factors),
            y: draw(concepts, factors),
            t_u: draw(users, width),
            t_k: draw(concepts, width),
            beta_u: 1.0,
            beta_k: 1.0,
        }
    }

    pub fn users(&self) -> usize {
        self.x.nrows()
    }

    pub fn concepts(&self) -> usize {
        self.y.nrows()
    }

    pub fn factors(&self) -> usize {
        self.x.ncols()
    }

    pub fn width(&self) -> usize {
        self.t_u.ncols()
    }

    fn check(&self, u: usize, k: usize) -> Result<()> {
        if u >= self.users() {
            return Err(Error::IndexOutOfRange(format!("user {u} of {}", self.users())));
        }
        if k >= self.concepts() {
            return Err(Error::IndexOutOfRange(format!("concept {k} of {}", self.concepts())));
        }
        Ok(())
    }

    pub(crate) fn score_unchecked(
        &self,
        e_u: &ArrayView1<'_, f64>,
        e_k: &ArrayView1<'_, f64>,
        u: usize,
        k: usize,
    ) -> f64 {
        self.x.row(u).dot(&self.y.row(k))
            + self.beta_u * e_u.dot(&self.t_k.row(k))
            + self.beta_k * self.t_u.row(u).dot(e_k)
    }
}

pub fn predict_rating(
    params: &MfParams,
    e_u: &ArrayView1<'_, f64>,
    e_k: &ArrayView1<'_, f64>,
    u: usize,
    k: usize,
) -> Result<f64> {
    params.check(u, k)?;
    if e_u.len() != params.width() || e_k.len() != params.width() {
        return Err(Error::Shape(format!(
            "representations of width {}/{} for bridge width {}",
            e_u.len(),
            e_k.len(),
            params.width()
        )));
    }
    Ok(params.score_unchecked(e_u, e_k, u, k))
}

/// Scores `candidates` for user `u`, in order.
pub fn predict_all_for_user(
    params: &MfParams,
    e_users: &Array2<f64>,
    e_concepts: &Array2<f64>,
    u: usize,
    candidates: &[usize],
) -> Result<Vec<f64>> {
    if u >= e_users.nrows() {
        return Err(Error::IndexOutOfRange(format!("user {u} of {}", e_users.nrows())));
    }
    let e_u = e_users.row(u);
    candidates
        .iter()
        .map(|&k| {
            if k >= e_concepts.nrows() {
                return Err(Error::IndexOutOfRange(format!("concept {k} of {}", e_concepts.nrows())));
            }
            predict_rating(params, &e_u, &e_concepts.row(k), u, k)
        })
        .collect()
}

/// Descending score, ascending index on ties.
pub fn ranking_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopN {
    pub items: Vec<(usize, f64)>,
    /// Fewer than `N` candidates were available.
    pub exhausted: bool,
}

/// The `n` best concepts for user `u` outside `exclude`.
pub fn top_n(
    params: &MfParams,
    e_users: &Array2<f64>,
    e_concepts: &Array2<f64>,
    u: usize,
    n: usize,
    exclude: &[usize],
) -> Result<TopN> {
    if n == 0 {
        return Err(Error::Config("top-N needs N >= 1".into()));
    }
    let mut skip = vec![false; params.concepts()];
    for &k in exclude {
        if let Some(s) = skip.get_mut(k) {
            *s = true;
        }
    }
    let candidates: Vec<usize> = (0..params.concepts()).filter(|k| !skip[*k]).collect();
    let scores = predict_all_for_user(params, e_users, e_concepts, u, &candidates)?;
    let mut scored: Vec<(usize, f64)> = candidates.into_iter().zip(scores).collect();
    scored.sort_by(ranking_order);
    let exhausted = scored.len() < n;
    scored.truncate(n);
    Ok(TopN { items: scored, exhausted })
}
