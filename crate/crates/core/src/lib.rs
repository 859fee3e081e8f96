//! Single-layer graph convolution recommender with distribution-aware
//! neighbor sampling.
//!
//! The numeric core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the precision.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod sampler;
pub mod scalar;
pub mod seed;
pub mod similarity;
pub mod synth;

pub use config::ExperimentConfig;
pub use error::{Error, ErrorKind, Result};
pub use graph::{InteractionGraph, NodeRef, NodeType};
pub use sampler::{SampledSubgraph, Strategy};

pub type Matrix = linalg::Matrix<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type FeatureMatrix = features::FeatureMatrix<f32>;
pub type FeatureMatrix64 = features::FeatureMatrix<f64>;
pub type AggregatedFeatures = model::AggregatedFeatures<f32>;
pub type AggregatedFeatures64 = model::AggregatedFeatures<f64>;
pub type Model = model::Model<f32>;
pub type Model64 = model::Model<f64>;
