//! Multi-session pose-graph SLAM backend.
//!
//! The pipeline ingests (or synthesizes) a pose graph whose landmark edges
//! may contain misrecognitions, rejects outliers by pairwise consistency and
//! maximum clique, prunes the remainder with a support-edge-weighted
//! minimum-cost multicut, optimizes the cleaned graph with batch
//! Levenberg-Marquardt, and scores the result against ground truth.
//!
//! All core math is generic over the scalar type (`f32` / `f64`) through
//! [`scalar::Real`]; the aliases at the crate root pin the `f64` types the
//! CLI and most callers use.

pub mod eval;
pub mod geometry;
pub mod graphio;
pub mod multicut;
pub mod optimizer;
pub mod pcm;
pub mod pipeline;
pub mod posegraph;
pub mod scalar;
pub mod synth;

pub use scalar::Real;

/// Planar rigid motion over `f64`.
pub type Pose2 = geometry::Pose2<f64>;
/// Spatial rigid motion over `f64`.
pub type Pose3 = geometry::Pose3<f64>;
/// Planar pose graph over `f64`.
pub type PoseGraph2 = posegraph::PoseGraph<geometry::Pose2<f64>>;
/// Spatial pose graph over `f64`.
pub type PoseGraph3 = posegraph::PoseGraph<geometry::Pose3<f64>>;
/// Node-to-pose estimate for planar graphs over `f64`.
pub type Estimate2 = optimizer::Estimate<geometry::Pose2<f64>>;
/// Node-to-pose estimate for spatial graphs over `f64`.
pub type Estimate3 = optimizer::Estimate<geometry::Pose3<f64>>;
