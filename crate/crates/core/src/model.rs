//! Full model: both encoder sides plus the factorization scorer, and the
//! JSON checkpoint container.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{forward_side, AttentionMode, EncoderParams, GcnStack, SideForward, SideGraph};
use crate::error::{Error, Result};
use crate::features::{one_hot_features, FeatureMatrix};
use crate::hin::{EntityType, Hin, MetaPathSpec};
use crate::mf::MfParams;

/// Which inputs feed the encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeatureMode {
    /// Content features only; propagation is the identity.
    #[serde(rename = "s")]
    ContentOnly,
    /// One-hot features over meta-path graphs.
    #[serde(rename = "r")]
    ContextOnly,
    /// Content features over meta-path graphs.
    #[default]
    #[serde(rename = "s+r")]
    ContentPlusContext,
    /// Content features over one merged, untyped adjacency per side.
    #[serde(rename = "h")]
    Homogeneous,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::ContentOnly => "s",
            FeatureMode::ContextOnly => "r",
            FeatureMode::ContentPlusContext => "s+r",
            FeatureMode::Homogeneous => "h",
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "s" | "content_only" => Ok(FeatureMode::ContentOnly),
            "r" | "context_only" => Ok(FeatureMode::ContextOnly),
            "s+r" | "content_plus_context" => Ok(FeatureMode::ContentPlusContext),
            "h" | "homogeneous" => Ok(FeatureMode::Homogeneous),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected s, r, s+r or h)"))),
        }
    }
}

/// Fixed graph inputs for both sides.
#[derive(Debug, Clone)]
pub struct ModelGraphs {
    pub user: SideGraph,
    pub concept: SideGraph,
}

impl ModelGraphs {
    pub fn build(
        hin: &Hin,
        user_features: &FeatureMatrix,
        concept_features: &FeatureMatrix,
        user_paths: &[MetaPathSpec],
        concept_paths: &[MetaPathSpec],
        mode: FeatureMode,
    ) -> Result<Self> {
        let side = |features: &FeatureMatrix, paths: &[MetaPathSpec]| -> Result<SideGraph> {
            match mode {
                FeatureMode::ContentOnly => SideGraph::content_only(features),
                FeatureMode::ContextOnly => {
                    SideGraph::from_meta_paths(hin, paths, &one_hot_features(features.entity_type, hin))
                }
                FeatureMode::ContentPlusContext => SideGraph::from_meta_paths(hin, paths, features),
                FeatureMode::Homogeneous => SideGraph::homogeneous(hin, paths, features),
            }
        };
        Ok(ModelGraphs { user: side(user_features, user_paths)?, concept: side(concept_features, concept_paths)? })
    }
}

/// Layer widths and sizes shared by both encoder sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    /// Representation width `d`.
    pub width: usize,
    /// Number of graph convolution layers.
    pub layers: usize,
    /// Hidden widths; defaults to `width` at every hidden layer when empty.
    pub hidden: Vec<usize>,
    /// Latent factor count `D`.
    pub factors: usize,
    pub attention: AttentionMode,
    pub mf_init_scale: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            width: 100,
            layers: 3,
            hidden: Vec::new(),
            factors: 30,
            attention: AttentionMode::PerNode,
            mf_init_scale: 0.1,
        }
    }
}

impl Architecture {
    pub fn hidden_widths(&self) -> Vec<usize> {
        if self.hidden.is_empty() {
            vec![self.width; self.layers.saturating_sub(1)]
        } else {
            self.hidden.clone()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(1..=4).contains(&self.layers) {
            return Err(Error::Config(format!("layers must be within 1..=4, got {}", self.layers)));
        }
        if self.width == 0 || self.factors == 0 {
            return Err(Error::Config("representation width and latent factors must be positive".into()));
        }
        if !self.hidden.is_empty() && self.hidden.len() + 1 != self.layers {
            return Err(Error::Config(format!("{} hidden widths given for {} layers", self.hidden.len(), self.layers)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub user: EncoderParams,
    pub concept: EncoderParams,
    pub mf: MfParams,
}

impl ModelParams {
    pub fn init(graphs: &ModelGraphs, arch: &Architecture, seed: u64) -> Result<Self> {
        arch.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = arch.hidden_widths();
        let user = EncoderParams::init(&graphs.user, &hidden, arch.width, &mut rng);
        let concept = EncoderParams::init(&graphs.concept, &hidden, arch.width, &mut rng);
        let mf = MfParams::init(
            graphs.user.nodes,
            graphs.concept.nodes,
            arch.factors,
            arch.width,
            arch.mf_init_scale,
            &mut rng,
        );
        Ok(ModelParams { user, concept, mf })
    }

    /// Frobenius norm over the regularized factorization tensors.
    pub fn regularized_norm(&self) -> f64 {
        [&self.mf.x, &self.mf.y, &self.mf.t_u, &self.mf.t_k]
            .iter()
            .map(|m| m.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Graph inputs, trainable parameters and the attention mode.
#[derive(Debug, Clone)]
pub struct Model {
    pub graphs: ModelGraphs,
    pub params: ModelParams,
    pub attention: AttentionMode,
}

#[derive(Debug, Clone)]
pub struct ModelForward {
    pub user: SideForward,
    pub concept: SideForward,
}

impl ModelForward {
    pub fn user_repr(&self) -> &Array2<f64> {
        &self.user.fused.e
    }

    pub fn concept_repr(&self) -> &Array2<f64> {
        &self.concept.fused.e
    }
}

impl Model {
    pub fn forward(&self) -> Result<ModelForward> {
        Ok(ModelForward {
            user: forward_side(&self.graphs.user, &self.params.user, self.attention)?,
            concept: forward_side(&self.graphs.concept, &self.params.concept, self.attention)?,
        })
    }
}

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------

pub const CHECKPOINT_FORMAT: &str = "kcrec-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_array(m: &Array2<f64>) -> Self {
        MatrixRecord { rows: m.nrows(), cols: m.ncols(), data: m.iter().copied().collect() }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| Error::Checkpoint(format!("matrix {}x{}: {e}", self.rows, self.cols)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub name: String,
    pub widths: Vec<usize>,
    pub weights: Vec<MatrixRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideRecord {
    pub entity_type: EntityType,
    pub paths: Vec<PathRecord>,
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfRecord {
    pub x: MatrixRecord,
    pub y: MatrixRecord,
    pub t_u: MatrixRecord,
    pub t_k: MatrixRecord,
    pub beta_u: f64,
    pub beta_k: f64,
}

/// Everything needed to score and recommend without the training graph:
/// parameters, the final fused representations and each user's training
/// history (excluded from recommendations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub mode: FeatureMode,
    pub attention: String,
    pub user_side: SideRecord,
    pub concept_side: SideRecord,
    pub mf: MfRecord,
    pub user_ids: Vec<String>,
    pub concept_ids: Vec<String>,
    pub user_repr: MatrixRecord,
    pub concept_repr: MatrixRecord,
    pub history: Vec<Vec<usize>>,
}

fn side_record(graph: &SideGraph, params: &EncoderParams) -> SideRecord {
    SideRecord {
        entity_type: graph.anchor,
        paths: graph
            .channels
            .iter()
            .zip(&params.stacks)
            .map(|(c, s)| PathRecord {
                name: c.name.clone(),
                widths: s.widths(),
                weights: s.weights.iter().map(MatrixRecord::from_array).collect(),
            })
            .collect(),
        attention: params.attention.to_vec(),
    }
}

fn side_params(record: &SideRecord) -> Result<EncoderParams> {
    let stacks = record
        .paths
        .iter()
        .map(|p| {
            let weights = p.weights.iter().map(MatrixRecord::to_array).collect::<Result<Vec<_>>>()?;
            let stack = GcnStack { weights };
            if stack.widths() != p.widths {
                return Err(Error::Checkpoint(format!("path {} widths disagree with its weights", p.name)));
            }
            Ok(stack)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncoderParams { stacks, attention: Array1::from(record.attention.clone()) })
}

impl Checkpoint {
    pub fn capture(
        model: &Model,
        forward: &ModelForward,
        hin: &Hin,
        history: Vec<Vec<usize>>,
        seed: u64,
        mode: FeatureMode,
    ) -> Self {
        let mf = &model.params.mf;
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed,
            mode,
            attention: match model.attention {
                AttentionMode::PerNode => "per_node".into(),
                AttentionMode::Global => "global".into(),
            },
            user_side: side_record(&model.graphs.user, &model.params.user),
            concept_side: side_record(&model.graphs.concept, &model.params.concept),
            mf: MfRecord {
                x: MatrixRecord::from_array(&mf.x),
                y: MatrixRecord::from_array(&mf.y),
                t_u: MatrixRecord::from_array(&mf.t_u),
                t_k: MatrixRecord::from_array(&mf.t_k),
                beta_u: mf.beta_u,
                beta_k: mf.beta_k,
            },
            user_ids: hin.entities(EntityType::User).ids().to_vec(),
            concept_ids: hin.entities(EntityType::Concept).ids().to_vec(),
            user_repr: MatrixRecord::from_array(forward.user_repr()),
            concept_repr: MatrixRecord::from_array(forward.concept_repr()),
            history,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported container {} v{}", ckpt.format, ckpt.version)));
        }
        Ok(ckpt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn mf_params(&self) -> Result<MfParams> {
        Ok(MfParams {
            x: self.mf.x.to_array()?,
            y: self.mf.y.to_array()?,
            t_u: self.mf.t_u.to_array()?,
            t_k: self.mf.t_k.to_array()?,
            beta_u: self.mf.beta_u,
            beta_k: self.mf.beta_k,
        })
    }

    pub fn encoder_params(&self) -> Result<(EncoderParams, EncoderParams)> {
        Ok((side_params(&self.user_side)?, side_params(&self.concept_side)?))
    }

    pub fn representations(&self) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok((self.user_repr.to_array()?, self.concept_repr.to_array()?))
    }
}
