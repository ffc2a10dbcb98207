//! Two-stage 3D human pose lifting.
//!
//! The 2D side covers square crop-and-resize geometry around a detector box
//! and heatmap peak decoding. The 3D side is a residual MLP with batch
//! normalization, dropout and max-norm constraints that regresses
//! root-relative 3D joints from standardized 2D joints, trained with
//! hand-written backpropagation on synthetic skeleton data.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod optim;
pub mod preprocess;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network = nn::LiftingNetwork<f64>;
pub type Network32 = nn::LiftingNetwork<f32>;
pub type Model = model::LiftingModel<f64>;
pub type Model32 = model::LiftingModel<f32>;
pub type Pose2 = preprocess::Pose2D<f64>;
pub type Pose3 = preprocess::Pose3D<f64>;
pub type Crop = geometry::CropTransform<f64>;
pub type BBox = geometry::BoundingBox<f64>;
pub type Stats = preprocess::NormStats<f64>;
pub type Camera = synth::CameraModel<f64>;
pub type Template = synth::SkeletonTemplate<f64>;
pub type Data = train::TrainingData<f64>;
