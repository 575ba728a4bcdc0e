//! Local-global motion aggregation over the points of the first frame.
//!
//! Context features decide *where* motion is borrowed from: a global map
//! over all points (softmax of projected-context dot products) and a local
//! map over each point's k nearest neighbors (scores from an edge MLP on
//! relative position and both endpoints' context). Motion features, after
//! the value projection, are averaged under both maps and merged back by the
//! offset aggregator.

mod config;
mod forward;
mod params;

pub use config::{Aggregator, GlobalLogits, Gma3dConfig, NeighborFrame};
pub use forward::{
    aggregate_global, aggregate_local, forward, forward_with_frames, global_attention_weights,
    offset_aggregate, project_qkv, trace_aggregate, trace_forward, trace_global_weights,
    trace_local, trace_project, AttentionMap, FeatureSet, ForwardVars, Gma3dOutput, LocalGeometry,
};
pub use params::{Gma3dParams, Gma3dVars};
