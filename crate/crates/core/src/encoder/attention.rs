//! Meta-path attention: `alpha_p = softmax_p(tanh(a . e_p))`, then a convex
//! combination of the per-path representations.

use ndarray::{Array1, Array2, ArrayView1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionMode {
    /// One weight vector per node.
    #[default]
    PerNode,
    /// One weight vector for the whole side, scored on mean-pooled rows.
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedRepresentation {
    pub e: Array2<f64>,
    /// `count x |MP|`, rows sum to one.
    pub alpha: Array2<f64>,
}

/// Softmax whose normalizer is summed in sorted order, so permuting the
/// inputs permutes the outputs bit for bit.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let mut sorted = exps.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total: f64 = sorted.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn pooled_mean(rep: &Array2<f64>) -> Array1<f64> {
    rep.mean_axis(ndarray::Axis(0)).unwrap_or_else(|| Array1::zeros(rep.ncols()))
}

/// Gated logits `tanh(a . e_p[i])`, shape `count x |MP|`.
pub(crate) fn gated_logits(reps: &[Array2<f64>], a: &ArrayView1<'_, f64>, mode: AttentionMode) -> Array2<f64> {
    let n = reps[0].nrows();
    let paths = reps.len();
    match mode {
        AttentionMode::PerNode => {
            let mut out = Array2::zeros((n, paths));
            for (p, rep) in reps.iter().enumerate() {
                let scores = rep.dot(a);
                for i in 0..n {
                    out[[i, p]] = scores[i].tanh();
                }
            }
            out
        }
        AttentionMode::Global => {
            let logits: Vec<f64> = reps.iter().map(|r| pooled_mean(r).dot(a).tanh()).collect();
            Array2::from_shape_fn((n, paths), |(_, p)| logits[p])
        }
    }
}

/// Attention weights over meta-paths for every node.
pub fn attention_scores(reps: &[Array2<f64>], a: &ArrayView1<'_, f64>, mode: AttentionMode) -> Array2<f64> {
    assert!(!reps.is_empty(), "attention needs at least one meta-path");
    let shape = reps[0].dim();
    assert!(reps.iter().all(|r| r.dim() == shape), "per-path representations differ in shape");
    let gated = gated_logits(reps, a, mode);
    let mut alpha = Array2::zeros(gated.dim());
    for (i, row) in gated.rows().into_iter().enumerate() {
        for (p, w) in softmax(row.as_slice().unwrap()).into_iter().enumerate() {
            alpha[[i, p]] = w;
        }
    }
    alpha
}

/// `e[i] = sum_p alpha[i][p] e_p[i]`.
pub fn fuse(reps: &[Array2<f64>], alpha: &Array2<f64>) -> FusedRepresentation {
    let mut e = Array2::zeros(reps[0].dim());
    for (p, rep) in reps.iter().enumerate() {
        for (i, mut row) in e.rows_mut().into_iter().enumerate() {
            row.scaled_add(alpha[[i, p]], &rep.row(i));
        }
    }
    FusedRepresentation { e, alpha: alpha.clone() }
}

/// Gradients of fused output w.r.t. each per-path representation and `a`.
pub(crate) fn attention_backward(
    reps: &[Array2<f64>],
    a: &ArrayView1<'_, f64>,
    alpha: &Array2<f64>,
    mode: AttentionMode,
    d_e: &Array2<f64>,
) -> (Vec<Array2<f64>>, Array1<f64>) {
    let n = d_e.nrows();
    let paths = reps.len();
    let gated = gated_logits(reps, a, mode);
    let mut d_reps: Vec<Array2<f64>> = (0..paths)
        .map(|p| {
            let mut d = d_e.clone();
            for (i, mut row) in d.rows_mut().into_iter().enumerate() {
                row *= alpha[[i, p]];
            }
            d
        })
        .collect();
    let mut d_a = Array1::zeros(a.len());

    match mode {
        AttentionMode::PerNode => {
            for i in 0..n {
                let g = d_e.row(i);
                let c: Vec<f64> = reps.iter().map(|r| g.dot(&r.row(i))).collect();
                let mean_c: f64 = (0..paths).map(|p| alpha[[i, p]] * c[p]).sum();
                for p in 0..paths {
                    let s = gated[[i, p]];
                    let d_logit = alpha[[i, p]] * (c[p] - mean_c) * (1.0 - s * s);
                    if d_logit != 0.0 {
                        d_a.scaled_add(d_logit, &reps[p].row(i));
                        d_reps[p].row_mut(i).scaled_add(d_logit, a);
                    }
                }
            }
        }
        AttentionMode::Global => {
            if n == 0 {
                return (d_reps, d_a);
            }
            let weights = alpha.row(0);
            let c: Vec<f64> = reps.iter().map(|r| (r * d_e).sum()).collect();
            let mean_c: f64 = (0..paths).map(|p| weights[p] * c[p]).sum();
            for p in 0..paths {
                let s = gated[[0, p]];
                let d_logit = weights[p] * (c[p] - mean_c) * (1.0 - s * s);
                d_a.scaled_add(d_logit, &pooled_mean(&reps[p]));
                let spread = a.mapv(|v| v * d_logit / n as f64);
                for mut row in d_reps[p].rows_mut() {
                    row += &spread;
                }
            }
        }
    }
    (d_reps, d_a)
}
