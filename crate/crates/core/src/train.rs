//! Joint training of both encoders and the factorization scorer.
//!
//! The objective on a batch `B` of (user, concept, target) samples is
//! `mean_B (r - r_hat)^2 + lambda * sum ||col||` over the factor and bridge
//! rows touched by the batch. Gradients are computed analytically all the
//! way through attention and every graph convolution stack.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{Array1, Array2, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{backward_side, EncoderGrads, EncoderParams};
use crate::error::{Error, Result};
use crate::model::{FeatureMode, Model, ModelForward, ModelParams};
use crate::sparse::Csr;

/// Observed user-concept interactions; values are the regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    entries: Csr<f64>,
}

impl RatingMatrix {
    pub fn new(users: usize, concepts: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let triplets: Vec<_> = triplets.into_iter().collect();
        for &(u, k, v) in &triplets {
            if u >= users || k >= concepts {
                return Err(Error::IndexOutOfRange(format!("interaction ({u}, {k}) outside {users}x{concepts}")));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("non-finite rating at ({u}, {k})")));
            }
        }
        Ok(RatingMatrix { entries: Csr::from_triplets(users, concepts, &triplets) })
    }

    pub fn users(&self) -> usize {
        self.entries.rows()
    }

    pub fn concepts(&self) -> usize {
        self.entries.cols()
    }

    pub fn nnz(&self) -> usize {
        self.entries.nnz()
    }

    pub fn contains(&self, u: usize, k: usize) -> bool {
        self.entries.get(u, k) != 0.0
    }

    pub fn get(&self, u: usize, k: usize) -> f64 {
        self.entries.get(u, k)
    }

    pub fn user_items(&self, u: usize) -> Vec<usize> {
        self.entries.row(u).map(|(k, _)| k).collect()
    }

    /// Row-major `(user, concept, value)` triplets.
    pub fn positives(&self) -> Vec<(usize, usize, f64)> {
        self.entries.triplets()
    }

    pub fn histories(&self) -> Vec<Vec<usize>> {
        (0..self.users()).map(|u| self.user_items(u)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSample {
    pub user: usize,
    pub concept: usize,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegNorm {
    /// `lambda * ||v||` per touched row.
    #[default]
    Euclidean,
    /// `lambda * ||v||^2` per touched row.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Positives plus sampled unobserved pairs with target 0.
    #[default]
    Sampled,
    /// Every user-concept pair each epoch, unobserved ones with target 0.
    FullGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub lambda: f64,
    pub reg_norm: RegNorm,
    pub log1p_targets: bool,
}

impl Default for Objective {
    fn default() -> Self {
        Objective { lambda: 1e-4, reg_norm: RegNorm::Euclidean, log1p_targets: false }
    }
}

impl Objective {
    fn target(&self, raw: f64) -> f64 {
        if self.log1p_targets {
            raw.ln_1p()
        } else {
            raw
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub objective: Objective,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub mode: FeatureMode,
    pub clip_norm: f64,
    pub loss: LossMode,
    pub freeze_beta: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            objective: Objective::default(),
            epochs: 20,
            batch_size: 256,
            negatives_per_positive: 1,
            seed: 0,
            mode: FeatureMode::ContentPlusContext,
            clip_norm: 5.0,
            loss: LossMode::Sampled,
            freeze_beta: false,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.objective.lambda.is_finite() && self.objective.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.objective.lambda)));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("negatives_per_positive must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfGrads {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub t_u: Array2<f64>,
    pub t_k: Array2<f64>,
    pub beta_u: f64,
    pub beta_k: f64,
}

/// Gradient of the objective with respect to every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub user: EncoderGrads,
    pub concept: EncoderGrads,
    pub mf: MfGrads,
}

impl GradientBundle {
    /// `(name, values)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (side, g) in [("user", &self.user), ("concept", &self.concept)] {
            for (p, stack) in g.stacks.iter().enumerate() {
                for (l, w) in stack.iter().enumerate() {
                    out.push((format!("{side}.path{p}.W{l}"), w.iter().copied().collect()));
                }
            }
            out.push((format!("{side}.attention"), g.attention.to_vec()));
        }
        out.push(("mf.x".into(), self.mf.x.iter().copied().collect()));
        out.push(("mf.y".into(), self.mf.y.iter().copied().collect()));
        out.push(("mf.t_u".into(), self.mf.t_u.iter().copied().collect()));
        out.push(("mf.t_k".into(), self.mf.t_k.iter().copied().collect()));
        out.push(("mf.beta_u".into(), vec![self.mf.beta_u]));
        out.push(("mf.beta_k".into(), vec![self.mf.beta_k]));
        out
    }

    fn ensure_finite(&self) -> Result<()> {
        for (name, values) in self.tensors() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name));
            }
        }
        Ok(())
    }
}

fn touched(batch: &[TrainSample]) -> (BTreeSet<usize>, BTreeSet<usize>) {
    (batch.iter().map(|s| s.user).collect(), batch.iter().map(|s| s.concept).collect())
}

fn row_penalty(m: &Array2<f64>, rows: &BTreeSet<usize>, norm: RegNorm) -> f64 {
    rows.iter()
        .map(|&r| {
            let sq: f64 = m.row(r).iter().map(|v| v * v).sum();
            match norm {
                RegNorm::Euclidean => sq.sqrt(),
                RegNorm::Squared => sq,
            }
        })
        .sum()
}

fn add_row_penalty_grad(g: &mut Array2<f64>, m: &Array2<f64>, rows: &BTreeSet<usize>, lambda: f64, norm: RegNorm) {
    for &r in rows {
        let row = m.row(r);
        let scale = match norm {
            RegNorm::Euclidean => {
                let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 {
                    continue;
                }
                lambda / n
            }
            RegNorm::Squared => 2.0 * lambda,
        };
        g.row_mut(r).scaled_add(scale, &row);
    }
}

/// Objective value given already computed representations.
pub fn loss_from_representations(
    batch: &[TrainSample],
    params: &ModelParams,
    e_users: &Array2<f64>,
    e_concepts: &Array2<f64>,
    objective: &Objective,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let mf = &params.mf;
    let sq: f64 = batch
        .iter()
        .map(|s| {
            let r = mf.score_unchecked(&e_users.row(s.user), &e_concepts.row(s.concept), s.user, s.concept);
            let diff = objective.target(s.target) - r;
            diff * diff
        })
        .sum();
    let (us, ks) = touched(batch);
    let reg = row_penalty(&mf.x, &us, objective.reg_norm)
        + row_penalty(&mf.t_u, &us, objective.reg_norm)
        + row_penalty(&mf.y, &ks, objective.reg_norm)
        + row_penalty(&mf.t_k, &ks, objective.reg_norm);
    sq / batch.len() as f64 + objective.lambda * reg
}

fn check_batch(batch: &[TrainSample], params: &ModelParams) -> Result<()> {
    for s in batch {
        if s.user >= params.mf.users() || s.concept >= params.mf.concepts() {
            return Err(Error::IndexOutOfRange(format!("sample ({}, {})", s.user, s.concept)));
        }
    }
    Ok(())
}

pub fn loss(batch: &[TrainSample], model: &Model, objective: &Objective) -> Result<f64> {
    check_batch(batch, &model.params)?;
    let fwd = model.forward()?;
    Ok(loss_from_representations(batch, &model.params, fwd.user_repr(), fwd.concept_repr(), objective))
}

/// Analytic gradient of [`loss`] at the state captured in `fwd`.
pub fn backward(
    batch: &[TrainSample],
    model: &Model,
    fwd: &ModelForward,
    objective: &Objective,
) -> Result<GradientBundle> {
    check_batch(batch, &model.params)?;
    let mf = &model.params.mf;
    let e_u = fwd.user_repr();
    let e_k = fwd.concept_repr();
    let mut g = MfGrads {
        x: Array2::zeros(mf.x.dim()),
        y: Array2::zeros(mf.y.dim()),
        t_u: Array2::zeros(mf.t_u.dim()),
        t_k: Array2::zeros(mf.t_k.dim()),
        beta_u: 0.0,
        beta_k: 0.0,
    };
    let mut d_eu = Array2::zeros(e_u.dim());
    let mut d_ek = Array2::zeros(e_k.dim());
    let scale = if batch.is_empty() { 0.0 } else { 2.0 / batch.len() as f64 };

    for s in batch {
        let (u, k) = (s.user, s.concept);
        let r = mf.score_unchecked(&e_u.row(u), &e_k.row(k), u, k);
        let c = -scale * (objective.target(s.target) - r);
        if c == 0.0 {
            continue;
        }
        g.x.row_mut(u).scaled_add(c, &mf.y.row(k));
        g.y.row_mut(k).scaled_add(c, &mf.x.row(u));
        g.t_k.row_mut(k).scaled_add(c * mf.beta_u, &e_u.row(u));
        g.t_u.row_mut(u).scaled_add(c * mf.beta_k, &e_k.row(k));
        d_eu.row_mut(u).scaled_add(c * mf.beta_u, &mf.t_k.row(k));
        d_ek.row_mut(k).scaled_add(c * mf.beta_k, &mf.t_u.row(u));
        g.beta_u += c * e_u.row(u).dot(&mf.t_k.row(k));
        g.beta_k += c * mf.t_u.row(u).dot(&e_k.row(k));
    }

    let (us, ks) = touched(batch);
    let (lambda, norm) = (objective.lambda, objective.reg_norm);
    add_row_penalty_grad(&mut g.x, &mf.x, &us, lambda, norm);
    add_row_penalty_grad(&mut g.t_u, &mf.t_u, &us, lambda, norm);
    add_row_penalty_grad(&mut g.y, &mf.y, &ks, lambda, norm);
    add_row_penalty_grad(&mut g.t_k, &mf.t_k, &ks, lambda, norm);

    let user = backward_side(&model.graphs.user, &model.params.user, model.attention, &fwd.user, &d_eu);
    let concept = backward_side(&model.graphs.concept, &model.params.concept, model.attention, &fwd.concept, &d_ek);
    let bundle = GradientBundle { user, concept, mf: g };
    bundle.ensure_finite()?;
    Ok(bundle)
}

fn clip_factor(norm: f64, clip: f64) -> f64 {
    if norm > clip {
        clip / norm
    } else {
        1.0
    }
}

fn step_matrix(w: &mut Array2<f64>, g: &Array2<f64>, lr: f64, clip: f64) {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = lr * clip_factor(norm, clip);
    Zip::from(w).and(g).for_each(|w, g| *w -= s * g);
}

fn step_vector(w: &mut Array1<f64>, g: &Array1<f64>, lr: f64, clip: f64) {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = lr * clip_factor(norm, clip);
    Zip::from(w).and(g).for_each(|w, g| *w -= s * g);
}

fn step_encoder(params: &mut EncoderParams, grads: &EncoderGrads, lr: f64, clip: f64) {
    for (stack, gs) in params.stacks.iter_mut().zip(&grads.stacks) {
        for (w, g) in stack.weights.iter_mut().zip(gs) {
            step_matrix(w, g, lr, clip);
        }
    }
    step_vector(&mut params.attention, &grads.attention, lr, clip);
}

/// Plain gradient descent with per-tensor norm clipping. The bridge scales
/// are kept non-negative.
pub fn sgd_step(params: &mut ModelParams, grads: &GradientBundle, lr: f64, clip_norm: f64, freeze_beta: bool) {
    step_encoder(&mut params.user, &grads.user, lr, clip_norm);
    step_encoder(&mut params.concept, &grads.concept, lr, clip_norm);
    let mf = &mut params.mf;
    step_matrix(&mut mf.x, &grads.mf.x, lr, clip_norm);
    step_matrix(&mut mf.y, &grads.mf.y, lr, clip_norm);
    step_matrix(&mut mf.t_u, &grads.mf.t_u, lr, clip_norm);
    step_matrix(&mut mf.t_k, &grads.mf.t_k, lr, clip_norm);
    if !freeze_beta {
        let gb = grads.mf.beta_u;
        mf.beta_u = (mf.beta_u - lr * clip_factor(gb.abs(), clip_norm) * gb).max(0.0);
        let gb = grads.mf.beta_k;
        mf.beta_k = (mf.beta_k - lr * clip_factor(gb.abs(), clip_norm) * gb).max(0.0);
    }
}

/// Draws `count` concepts the user has not interacted with.
fn sample_negatives(ratings: &RatingMatrix, u: usize, count: usize, rng: &mut ChaCha8Rng, out: &mut Vec<TrainSample>) {
    let n = ratings.concepts();
    let observed = ratings.user_items(u);
    if observed.len() >= n {
        return;
    }
    for _ in 0..count {
        loop {
            let k = rng.gen_range(0..n);
            if observed.binary_search(&k).is_err() {
                out.push(TrainSample { user: u, concept: k, target: 0.0 });
                break;
            }
        }
    }
}

/// Every pair of the rating grid, unobserved ones with target 0.
pub fn full_grid_batch(ratings: &RatingMatrix) -> Vec<TrainSample> {
    let mut out = Vec::with_capacity(ratings.users() * ratings.concepts());
    for u in 0..ratings.users() {
        for k in 0..ratings.concepts() {
            out.push(TrainSample { user: u, concept: k, target: ratings.get(u, k) });
        }
    }
    out
}

fn epoch_samples(ratings: &RatingMatrix, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<TrainSample> {
    match cfg.loss {
        LossMode::FullGrid => {
            let mut all = full_grid_batch(ratings);
            all.shuffle(rng);
            all
        }
        LossMode::Sampled => {
            let mut positives = ratings.positives();
            positives.shuffle(rng);
            let mut out = Vec::with_capacity(positives.len() * (1 + cfg.negatives_per_positive));
            for (u, k, v) in positives {
                out.push(TrainSample { user: u, concept: k, target: v });
                sample_negatives(ratings, u, cfg.negatives_per_positive, rng, &mut out);
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Objective over the first epoch's samples before any update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss, |e| e.loss)
    }
}

/// Runs `cfg.epochs` epochs of mini-batch descent starting from
/// `model.params`. `on_epoch` sees the parameters after every epoch.
pub fn train_with<F>(model: &Model, ratings: &RatingMatrix, cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, &ModelParams) -> Result<()>,
{
    cfg.check()?;
    if ratings.nnz() == 0 {
        return Err(Error::NoTrainingPositives);
    }
    if ratings.users() != model.params.mf.users() || ratings.concepts() != model.params.mf.concepts() {
        return Err(Error::Shape(format!(
            "ratings are {}x{} but the model covers {}x{}",
            ratings.users(),
            ratings.concepts(),
            model.params.mf.users(),
            model.params.mf.concepts()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = model.clone();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut initial_loss = None;

    for epoch in 1..=cfg.epochs.max(1) {
        let samples = epoch_samples(ratings, cfg, &mut rng);
        if initial_loss.is_none() {
            initial_loss = Some(loss(&samples, &work, &cfg.objective)?);
            if cfg.epochs == 0 {
                break;
            }
        }
        let start = Instant::now();
        let mut total = 0.0;
        for batch in samples.chunks(cfg.batch_size) {
            let fwd = work.forward()?;
            let value =
                loss_from_representations(batch, &work.params, fwd.user_repr(), fwd.concept_repr(), &cfg.objective);
            if !value.is_finite() {
                return Err(Error::NonFiniteGradient(format!("loss at epoch {epoch}")));
            }
            let grads = backward(batch, &work, &fwd, &cfg.objective)?;
            sgd_step(&mut work.params, &grads, cfg.learning_rate, cfg.clip_norm, cfg.freeze_beta);
            total += value * batch.len() as f64;
        }
        let record = EpochRecord { epoch, loss: total / samples.len() as f64, wall_ms: start.elapsed().as_millis() };
        log::info!("epoch {epoch}: loss {:.6} ({} ms)", record.loss, record.wall_ms);
        on_epoch(&record, &work.params)?;
        epochs.push(record);
    }

    Ok(TrainOutcome { params: work.params, initial_loss: initial_loss.unwrap_or(0.0), epochs })
}

pub fn train(model: &Model, ratings: &RatingMatrix, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, ratings, cfg, |_, _| Ok(()))
}
