//! Symmetric normalization and the stacked ReLU graph convolution.

use ndarray::{Array2, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureData, FeatureMatrix};
use crate::hin::PathAdjacency;
use crate::sparse::Csr;

/// `P = D^-1/2 (A + I) D^-1/2` with `D = diag((A + I) 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub p: Csr<f64>,
}

impl NormalizedAdjacency {
    pub fn identity(n: usize) -> Self {
        NormalizedAdjacency { p: Csr::identity(n, 1.0) }
    }

    /// Normalizes a binary adjacency. Existing diagonal entries are dropped
    /// before the self-loop is added.
    pub fn from_binary(adj: &Csr<u64>) -> Self {
        assert_eq!(adj.rows(), adj.cols(), "adjacency must be square");
        let n = adj.rows();
        let off = adj.without_diagonal();
        let degree: Vec<f64> = (0..n).map(|i| 1.0 + off.row(i).filter(|(_, v)| *v != 0).count() as f64).collect();
        let mut triplets = Vec::with_capacity(off.nnz() + n);
        for i in 0..n {
            triplets.push((i, i, 1.0 / degree[i]));
            for (j, v) in off.row(i) {
                if v != 0 {
                    triplets.push((i, j, 1.0 / (degree[i] * degree[j]).sqrt()));
                }
            }
        }
        NormalizedAdjacency { p: Csr::from_triplets(n, n, &triplets) }
    }

    pub fn size(&self) -> usize {
        self.p.rows()
    }
}

pub fn normalize_adjacency(adj: &PathAdjacency) -> NormalizedAdjacency {
    NormalizedAdjacency::from_binary(&adj.binary)
}

/// Per-meta-path weight stack `W^0 .. W^{L-1}`; `W^l` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnStack {
    pub weights: Vec<Array2<f64>>,
}

impl GcnStack {
    /// Glorot-uniform initialization over the width chain
    /// `input -> hidden... -> output`.
    pub fn glorot<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "a stack needs at least one layer");
        let weights = widths
            .windows(2)
            .map(|w| {
                let s = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-s..=s))
            })
            .collect();
        GcnStack { weights }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_width(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_width(&self) -> usize {
        self.weights.last().map(|w| w.ncols()).unwrap_or(0)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.weights.iter().map(|m| m.ncols()));
        w
    }

    pub fn check(&self, input_width: usize) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Shape("weight stack has no layers".into()));
        }
        if self.input_width() != input_width {
            return Err(Error::Shape(format!(
                "layer 0 expects input width {}, features have {input_width}",
                self.input_width()
            )));
        }
        for (l, pair) in self.weights.windows(2).enumerate() {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} columns but layer {} expects {}",
                    l,
                    pair[0].ncols(),
                    l + 1,
                    pair[1].nrows()
                )));
            }
        }
        Ok(())
    }
}

/// First-layer input `P X`, fixed for the lifetime of a graph.
#[derive(Debug, Clone)]
pub enum Propagated {
    /// One-hot features: `P X = P`; the transpose is kept for backward.
    Sparse {
        px: Csr<f64>,
        px_t: Csr<f64>,
    },
    Dense(Array2<f64>),
}

impl Propagated {
    pub fn new(p: &NormalizedAdjacency, x: &FeatureMatrix) -> Result<Self> {
        if x.rows() != p.size() {
            return Err(Error::Shape(format!("{} feature rows for an adjacency over {} nodes", x.rows(), p.size())));
        }
        Ok(match &x.data {
            FeatureData::Identity(_) => Propagated::Sparse { px: p.p.clone(), px_t: p.p.transpose() },
            FeatureData::Dense(m) => Propagated::Dense(p.p.dot_dense(&m.view())),
        })
    }

    pub fn width(&self) -> usize {
        match self {
            Propagated::Sparse { px, .. } => px.cols(),
            Propagated::Dense(m) => m.ncols(),
        }
    }

    fn times(&self, w: &Array2<f64>) -> Array2<f64> {
        match self {
            Propagated::Sparse { px, .. } => px.dot_dense(&w.view()),
            Propagated::Dense(m) => m.dot(w),
        }
    }

    fn transpose_times(&self, g: &Array2<f64>) -> Array2<f64> {
        match self {
            Propagated::Sparse { px_t, .. } => px_t.dot_dense(&g.view()),
            Propagated::Dense(m) => m.t().dot(g),
        }
    }
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    /// `P h^l` for layers `l >= 1` (index `l - 1`).
    pub propagated: Vec<Array2<f64>>,
    /// Pre-activations `P h^l W^l`.
    pub pre: Vec<Array2<f64>>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

/// Forward pass from a precomputed first-layer input.
pub fn forward_propagated(p: &NormalizedAdjacency, px: &Propagated, stack: &GcnStack) -> (Array2<f64>, GcnCache) {
    let mut cache = GcnCache { propagated: Vec::new(), pre: Vec::new() };
    let z = px.times(&stack.weights[0]);
    let mut h = relu(&z);
    cache.pre.push(z);
    for w in &stack.weights[1..] {
        let ph = p.p.dot_dense(&h.view());
        let z = ph.dot(w);
        h = relu(&z);
        cache.propagated.push(ph);
        cache.pre.push(z);
    }
    (h, cache)
}

/// `h^{l+1} = ReLU(P h^l W^l)` for every layer, `h^0 = X`.
pub fn gcn_forward(p: &NormalizedAdjacency, x: &FeatureMatrix, stack: &GcnStack) -> Result<(Array2<f64>, GcnCache)> {
    stack.check(x.width())?;
    let px = Propagated::new(p, x)?;
    Ok(forward_propagated(p, &px, stack))
}

/// Weight gradients given `d_out = dL/dh^L`. `p_t` is `P` transposed.
pub fn gcn_backward(
    p_t: &Csr<f64>,
    px: &Propagated,
    stack: &GcnStack,
    cache: &GcnCache,
    d_out: &Array2<f64>,
) -> Vec<Array2<f64>> {
    let layers = stack.layers();
    let mut grads = vec![Array2::zeros((0, 0)); layers];
    let mut dh = d_out.clone();
    for l in (0..layers).rev() {
        let mut dz = dh;
        // ReLU subgradient at exactly zero is taken as zero.
        Zip::from(&mut dz).and(&cache.pre[l]).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        grads[l] = if l == 0 { px.transpose_times(&dz) } else { cache.propagated[l - 1].t().dot(&dz) };
        if l == 0 {
            break;
        }
        let back = dz.dot(&stack.weights[l].t());
        dh = p_t.dot_dense(&back.view());
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hin::EntityType;
    use ndarray::array;

    fn two_node() -> NormalizedAdjacency {
        NormalizedAdjacency::from_binary(&Csr::from_triplets(2, 2, &[(0, 1, 1u64), (1, 0, 1)]))
    }

    #[test]
    fn normalizes_single_edge() {
        let p = two_node().p.to_dense();
        assert_eq!(p, array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn isolated_node_is_identity() {
        let p = NormalizedAdjacency::from_binary(&Csr::zeros(1, 1));
        assert_eq!(p.p.to_dense(), array![[1.0]]);
    }

    #[test]
    fn path_graph_is_symmetric_with_positive_diagonal() {
        let a = Csr::from_triplets(3, 3, &[(0, 1, 1u64), (1, 0, 1), (1, 2, 1), (2, 1, 1)]);
        let p = NormalizedAdjacency::from_binary(&a).p.to_dense();
        for i in 0..3 {
            assert!(p[[i, i]] > 0.0);
            for j in 0..3 {
                assert!((p[[i, j]] - p[[j, i]]).abs() < 1e-15);
                assert!(p[[i, j]] >= 0.0);
            }
        }
        // P[0][1] = 1/sqrt(2*3)
        assert!((p[[0, 1]] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identity_weights_on_two_node_graph() {
        let p = two_node();
        let x = FeatureMatrix::from_dense(EntityType::User, Array2::eye(2));
        let stack = GcnStack { weights: vec![Array2::eye(2); 3] };
        let (e, cache) = gcn_forward(&p, &x, &stack).unwrap();
        assert_eq!(e, array![[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(cache.pre[0], array![[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(cache.pre.len(), 3);
    }

    #[test]
    fn zero_first_layer_kills_output() {
        let p = two_node();
        let x = FeatureMatrix::from_dense(EntityType::User, array![[1.0, 2.0], [3.0, -4.0]]);
        let stack = GcnStack { weights: vec![Array2::zeros((2, 3)), Array2::eye(3), Array2::eye(3)] };
        let (e, _) = gcn_forward(&p, &x, &stack).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn relu_clamps_negative_single_node() {
        let p = NormalizedAdjacency::identity(1);
        let x = FeatureMatrix::from_dense(EntityType::User, array![[-3.0]]);
        let stack = GcnStack { weights: vec![array![[1.0]]; 3] };
        let (e, _) = gcn_forward(&p, &x, &stack).unwrap();
        assert_eq!(e, array![[0.0]]);
    }

    #[test]
    fn width_mismatch_names_the_layer() {
        let p = two_node();
        let x = FeatureMatrix::from_dense(EntityType::User, Array2::eye(2));
        let stack = GcnStack { weights: vec![Array2::eye(2), Array2::zeros((3, 2))] };
        let err = gcn_forward(&p, &x, &stack).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
        let stack = GcnStack { weights: vec![Array2::eye(3)] };
        let err = gcn_forward(&p, &x, &stack).unwrap_err().to_string();
        assert!(err.contains("layer 0"), "{err}");
    }

    #[test]
    fn one_hot_and_dense_identity_agree() {
        let a = Csr::from_triplets(3, 3, &[(0, 1, 1u64), (1, 0, 1), (1, 2, 1), (2, 1, 1)]);
        let p = NormalizedAdjacency::from_binary(&a);
        let mut rng = rand::thread_rng();
        let stack = GcnStack::glorot(&[3, 4, 2], &mut rng);
        let one_hot = FeatureMatrix {
            entity_type: EntityType::User,
            source: crate::features::FeatureSource::OneHot,
            data: FeatureData::Identity(3),
            fallback_rows: 0,
        };
        let dense = FeatureMatrix::from_dense(EntityType::User, Array2::eye(3));
        let (a, _) = gcn_forward(&p, &one_hot, &stack).unwrap();
        let (b, _) = gcn_forward(&p, &dense, &stack).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
