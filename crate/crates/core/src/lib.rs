//! Knowledge-concept recommendation over a heterogeneous MOOC graph.
//!
//! The pipeline:
//!
//! 1. [`dataset`] ingests entity manifests, relation files and click logs into
//!    a typed [`hin::Hin`] and splits clicks into train and test by time.
//! 2. [`hin::metapath`] composes relation incidences along meta-paths
//!    (`U-K-U`, `U-C-T-C-U`, ...) into homogeneous adjacencies.
//! 3. [`encoder`] runs one graph convolution stack per meta-path and fuses
//!    the per-path outputs with per-node attention.
//! 4. [`mf`] scores user/concept pairs with latent factors plus bridge terms
//!    over the fused representations; [`train`] fits everything end to end.
//! 5. [`eval`] ranks each held-out click against sampled negatives and
//!    reports HR@K, NDCG@K, MRR and AUC.
//!
//! [`experiment`] ties the stages together and drives parameter sweeps.

pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod hin;
pub mod mf;
pub mod model;
pub mod sparse;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
