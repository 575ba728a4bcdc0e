use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcclusionMode {
    /// Scattered occluded points, each keeping a visible k-NN neighbor.
    Local,
    /// Contiguous kNN-closed regions with no visible k-NN neighbor.
    Global,
    /// Global regions for half the target, local points for the rest.
    Mixed,
    /// Second frame is a farthest-point subsample of the warped cloud.
    Fps,
}

/// Linear map from flow to motion features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionEmbedding {
    /// `[I₃ | 0]`; needs `motion_dim ≥ 3`.
    Identity,
    /// Standard normal `3×Dm` matrix.
    Random,
}

/// Motion features written at occluded points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccludedMotion {
    Zero,
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_clusters: usize,
    pub points_per_cluster: usize,
    /// Per-axis std of points around a part center, meters.
    pub cluster_spread: f64,
    /// Gaussian parts per cluster, centered on a line along y.
    pub parts_per_cluster: usize,
    /// Distance between consecutive part centers, meters.
    pub part_separation: f64,
    /// Distance between consecutive cluster centers along x, meters.
    pub cluster_separation: f64,
    /// Translations are drawn per axis from `[-r, r]`, meters.
    pub translation_range: f64,
    /// Rotation angles are drawn from `[-r, r]`, radians.
    pub rotation_range: f64,
    /// In `[0, 1)`.
    pub occlusion_fraction: f64,
    pub occlusion_mode: OcclusionMode,
    /// k used by the local/global occlusion definitions.
    pub neighbor_k: usize,
    /// Occluded points must be farther than this from every second-frame point.
    pub r_match: f64,
    /// Minimum distance between any two first-frame points.
    pub min_separation: f64,
    pub context_dim: usize,
    pub motion_dim: usize,
    pub feature_noise_std: f64,
    pub motion_embedding: MotionEmbedding,
    pub occluded_motion: OccludedMotion,
    pub occluded_noise_std: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            points_per_cluster: 100,
            cluster_spread: 0.5,
            parts_per_cluster: 1,
            part_separation: 1.0,
            cluster_separation: 4.0,
            translation_range: 1.0,
            rotation_range: 0.3,
            occlusion_fraction: 0.0,
            occlusion_mode: OcclusionMode::Local,
            neighbor_k: 16,
            r_match: 1e-3,
            min_separation: 1e-2,
            context_dim: 32,
            motion_dim: 32,
            feature_noise_std: 0.0,
            motion_embedding: MotionEmbedding::Random,
            occluded_motion: OccludedMotion::Zero,
            occluded_noise_std: 0.1,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn n_points(&self) -> usize {
        self.n_clusters * self.points_per_cluster
    }

    /// Number of points to occlude: `round(fraction · n)`.
    pub fn occluded_target(&self, n: usize) -> usize {
        (self.occlusion_fraction * n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_clusters == 0 || self.points_per_cluster == 0 {
            return bad("scene.n_clusters and scene.points_per_cluster must be positive".into());
        }
        if self.n_points() < 2 {
            return bad("a scene needs at least two points".into());
        }
        if !(0.0..1.0).contains(&self.occlusion_fraction) {
            return bad(format!(
                "scene.occlusion_fraction must lie in [0, 1), got {}",
                self.occlusion_fraction
            ));
        }
        let non_negative = [
            ("cluster_spread", self.cluster_spread),
            ("cluster_separation", self.cluster_separation),
            ("part_separation", self.part_separation),
            ("translation_range", self.translation_range),
            ("rotation_range", self.rotation_range),
            ("r_match", self.r_match),
            ("min_separation", self.min_separation),
            ("feature_noise_std", self.feature_noise_std),
            ("occluded_noise_std", self.occluded_noise_std),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!(
                    "scene.{name} must be finite and non-negative, got {v}"
                ));
            }
        }
        if self.cluster_spread == 0.0 {
            return bad("scene.cluster_spread must be positive".into());
        }
        if self.parts_per_cluster == 0 || self.parts_per_cluster > self.points_per_cluster {
            return bad("scene.parts_per_cluster must lie in [1, points_per_cluster]".into());
        }
        if self.neighbor_k == 0 {
            return bad("scene.neighbor_k must be positive".into());
        }
        if self.context_dim == 0 || self.motion_dim == 0 {
            return bad("scene.context_dim and scene.motion_dim must be positive".into());
        }
        if self.context_dim < self.n_clusters {
            return bad(format!(
                "scene.context_dim ({}) must be at least scene.n_clusters ({})",
                self.context_dim, self.n_clusters
            ));
        }
        if self.motion_embedding == MotionEmbedding::Identity && self.motion_dim < 3 {
            return bad("identity motion embedding needs scene.motion_dim ≥ 3".into());
        }
        Ok(())
    }
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($kw => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}' (expected one of: ", $($kw, " ",)+ ")"),
                        other
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $kw,)+ })
            }
        }
    };
}

keyword_enum!(OcclusionMode { Local => "local", Global => "global", Fps => "fps", Mixed => "mixed" });
keyword_enum!(MotionEmbedding { Identity => "identity", Random => "random" });
keyword_enum!(OccludedMotion { Zero => "zero", Noise => "noise" });
