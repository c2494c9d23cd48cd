//! Meta-path guided graph convolution with attention fusion.
//!
//! Each side (users, concepts) owns a [`SideGraph`]: one normalized adjacency
//! per meta-path plus the fixed first-layer input `P X`. The trainable part is
//! [`EncoderParams`]: an independent [`GcnStack`] per path and one attention
//! vector per side.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::hin::{compose_meta_path, EntityType, Hin, MetaPathSpec};
use crate::sparse::Csr;

pub mod attention;
pub mod gcn;

pub use attention::{attention_scores, fuse, AttentionMode, FusedRepresentation};
pub use gcn::{gcn_backward, gcn_forward, normalize_adjacency, GcnCache, GcnStack, NormalizedAdjacency, Propagated};

#[derive(Debug, Clone)]
pub struct PathChannel {
    pub name: String,
    pub adjacency: NormalizedAdjacency,
    p_t: Csr<f64>,
    input: Propagated,
}

impl PathChannel {
    pub fn new(name: &str, adjacency: NormalizedAdjacency, features: &FeatureMatrix) -> Result<Self> {
        let input = Propagated::new(&adjacency, features)?;
        let p_t = adjacency.p.transpose();
        Ok(PathChannel { name: name.to_string(), adjacency, p_t, input })
    }
}

/// Fixed graph inputs for one side of the model.
#[derive(Debug, Clone)]
pub struct SideGraph {
    pub anchor: EntityType,
    pub channels: Vec<PathChannel>,
    pub feature_width: usize,
    pub nodes: usize,
}

impl SideGraph {
    pub fn from_adjacencies(
        anchor: EntityType,
        adjacencies: Vec<(String, NormalizedAdjacency)>,
        features: &FeatureMatrix,
    ) -> Result<Self> {
        if adjacencies.is_empty() {
            return Err(Error::Config(format!("no meta-paths selected for the {anchor} side")));
        }
        if features.entity_type != anchor {
            return Err(Error::Shape(format!("{} features supplied for the {anchor} side", features.entity_type)));
        }
        let channels = adjacencies
            .iter()
            .map(|(name, adj)| PathChannel::new(name, adj.clone(), features))
            .collect::<Result<Vec<_>>>()?;
        Ok(SideGraph { anchor, channels, feature_width: features.width(), nodes: features.rows() })
    }

    /// One channel per meta-path; all specs must share the features' anchor.
    pub fn from_meta_paths(hin: &Hin, specs: &[MetaPathSpec], features: &FeatureMatrix) -> Result<Self> {
        let anchor = features.entity_type;
        if let Some(bad) = specs.iter().find(|s| s.anchor != anchor) {
            return Err(Error::MetaPath {
                path: bad.name.clone(),
                message: format!("anchor {} does not match {anchor} features", bad.anchor),
            });
        }
        let adjacencies = specs
            .iter()
            .map(|s| Ok((s.name.clone(), normalize_adjacency(compose_meta_path(hin, s)?.as_ref()))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_adjacencies(anchor, adjacencies, features)
    }

    /// A single untyped channel whose adjacency is the union of all the
    /// given meta-path adjacencies.
    pub fn homogeneous(hin: &Hin, specs: &[MetaPathSpec], features: &FeatureMatrix) -> Result<Self> {
        let anchor = features.entity_type;
        let n = hin.count(anchor);
        let mut merged = Csr::<u64>::zeros(n, n);
        for spec in specs {
            merged = merged.union(&compose_meta_path(hin, spec)?.binary);
        }
        let merged = merged.binarized(1);
        Self::from_adjacencies(anchor, vec![("merged".into(), NormalizedAdjacency::from_binary(&merged))], features)
    }

    /// A single channel with `P = I`: content features only, no mixing.
    pub fn content_only(features: &FeatureMatrix) -> Result<Self> {
        let n = features.rows();
        Self::from_adjacencies(
            features.entity_type,
            vec![("identity".into(), NormalizedAdjacency::identity(n))],
            features,
        )
    }

    pub fn path_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }
}

/// Trainable encoder parameters of one side.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub stacks: Vec<GcnStack>,
    pub attention: Array1<f64>,
}

impl EncoderParams {
    /// Glorot-initialized stacks `feature_width -> hidden... -> d` for every
    /// channel, and a uniformly initialized attention vector.
    pub fn init<R: Rng>(graph: &SideGraph, hidden: &[usize], d: usize, rng: &mut R) -> Self {
        let mut widths = vec![graph.feature_width];
        widths.extend_from_slice(hidden);
        widths.push(d);
        let stacks = graph.channels.iter().map(|_| GcnStack::glorot(&widths, rng)).collect();
        let s = (6.0 / (d + 1) as f64).sqrt();
        let attention = Array1::from_shape_fn(d, |_| rng.gen_range(-s..=s));
        EncoderParams { stacks, attention }
    }

    pub fn output_width(&self) -> usize {
        self.attention.len()
    }

    pub fn check(&self, graph: &SideGraph) -> Result<()> {
        if self.stacks.len() != graph.channels.len() {
            return Err(Error::Shape(format!(
                "{} weight stacks for {} meta-paths",
                self.stacks.len(),
                graph.channels.len()
            )));
        }
        for (stack, channel) in self.stacks.iter().zip(&graph.channels) {
            stack.check(graph.feature_width).map_err(|e| Error::Shape(format!("path {}: {e}", channel.name)))?;
            if stack.output_width() != self.attention.len() {
                return Err(Error::Shape(format!(
                    "path {} outputs width {} but the attention vector has {}",
                    channel.name,
                    stack.output_width(),
                    self.attention.len()
                )));
            }
        }
        Ok(())
    }
}

/// Forward state of one side, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct SideForward {
    pub outputs: Vec<Array2<f64>>,
    pub caches: Vec<GcnCache>,
    pub fused: FusedRepresentation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub stacks: Vec<Vec<Array2<f64>>>,
    pub attention: Array1<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        EncoderGrads {
            stacks: params.stacks.iter().map(|s| s.weights.iter().map(|w| Array2::zeros(w.dim())).collect()).collect(),
            attention: Array1::zeros(params.attention.len()),
        }
    }
}

pub fn forward_side(graph: &SideGraph, params: &EncoderParams, mode: AttentionMode) -> Result<SideForward> {
    params.check(graph)?;
    let (outputs, caches): (Vec<_>, Vec<_>) = graph
        .channels
        .par_iter()
        .zip(params.stacks.par_iter())
        .map(|(channel, stack)| gcn::forward_propagated(&channel.adjacency, &channel.input, stack))
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    let alpha = attention_scores(&outputs, &params.attention.view(), mode);
    let fused = fuse(&outputs, &alpha);
    Ok(SideForward { outputs, caches, fused })
}

/// Backpropagates `d_e = dL/de` through attention and every path stack.
pub fn backward_side(
    graph: &SideGraph,
    params: &EncoderParams,
    mode: AttentionMode,
    fwd: &SideForward,
    d_e: &Array2<f64>,
) -> EncoderGrads {
    let (d_reps, d_a) =
        attention::attention_backward(&fwd.outputs, &params.attention.view(), &fwd.fused.alpha, mode, d_e);
    let stacks = graph
        .channels
        .par_iter()
        .zip(params.stacks.par_iter())
        .zip(fwd.caches.par_iter())
        .zip(d_reps.par_iter())
        .map(|(((channel, stack), cache), d_rep)| gcn_backward(&channel.p_t, &channel.input, stack, cache, d_rep))
        .collect();
    EncoderGrads { stacks, attention: d_a }
}

/// Composes, normalizes and convolves every meta-path, then fuses the
/// per-path outputs with attention.
pub fn encode_side(
    hin: &Hin,
    specs: &[MetaPathSpec],
    features: &FeatureMatrix,
    params: &EncoderParams,
    mode: AttentionMode,
) -> Result<FusedRepresentation> {
    let graph = SideGraph::from_meta_paths(hin, specs, features)?;
    Ok(forward_side(&graph, params, mode)?.fused)
}
