//! Deep graph clustering that learns the number of clusters while it trains.
//!
//! Node attributes are smoothed over the graph, embedded by a two-view
//! encoder trained with a contrastive and a clustering-guidance loss, and
//! clustered with K-Means. A small quality network, trained by Q-learning
//! from a cohesion/separation reward, chooses the cluster count each epoch.
//!
//! All numeric code is generic over [`Real`]; the `*64` aliases below fix
//! the scalar to `f64`, which is what the training pipeline and its
//! gradient tolerances are validated against.

pub mod cluster;
pub mod config;
pub mod encoder;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod matrix;
pub mod ndiff;
pub mod objectives;
pub mod record;
pub mod rl;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Real;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Graph64 = graph::AttributedGraph<f64>;
pub type Features64 = graph::FilteredFeatures<f64>;
pub type EncoderParams64 = encoder::EncoderParams<f64>;
pub type Embedding64 = encoder::EmbeddingState<f64>;
pub type ClusterResult64 = cluster::ClusterResult<f64>;

pub type QualityParams64 = rl::QualityNetworkParams<f64>;
pub type ClusterState64 = rl::ClusterState<f64>;
pub type Experience64 = rl::Experience<f64>;
