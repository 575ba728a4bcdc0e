//! Occlusion-aware motion aggregation for point-cloud scene flow.
//!
//! The crate is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases below pin the 64-bit instantiation used by
//! the generator, trainer and command-line tool.

pub mod error;
pub mod flowmetrics;
pub mod gma3d;
pub mod numkern;
pub mod rng;
pub mod scalar;
pub mod spatial;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Array = numkern::DenseArray<f64>;
pub type Array32 = numkern::DenseArray<f32>;
pub type Tape64 = numkern::Tape<f64>;
pub type Cloud = spatial::PointCloud<f64>;
pub type Flow = flowmetrics::FlowField<f64>;
pub type Features = gma3d::FeatureSet<f64>;
pub type Params = gma3d::Gma3dParams<f64>;
pub type Params32 = gma3d::Gma3dParams<f32>;
