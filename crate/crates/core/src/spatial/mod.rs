//! Point clouds, exact k-NN and farthest point sampling.

mod cloud;
mod fps;
mod knn;

pub use cloud::{dist2, PointCloud};
pub use fps::{fps, min_pairwise_distance};
pub use knn::{knn, knn_brute_force, knn_with, KdTree, NeighborIndex};
