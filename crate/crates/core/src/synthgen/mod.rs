//! Two-frame synthetic scenes: Gaussian point clusters under per-cluster
//! rigid motion, with occlusion produced by deleting second-frame
//! counterparts of selected first-frame points.
//!
//! Random streams: the seed feeds one [`SceneRng`]; three forks of it drive,
//! in order, point/motion sampling, occlusion selection and features.

mod config;
mod features;
mod occlusion;

pub use config::{MotionEmbedding, OccludedMotion, OcclusionMode, SceneConfig};
pub use features::synth_features;

use crate::error::{Error, Result};
use crate::flowmetrics::FlowField;
use crate::numkern::DenseArray;
use crate::rng::SceneRng;
use crate::spatial::{dist2, fps, knn, PointCloud};

/// Rigid motion of one cluster: rotation about `center`, then translation.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidMotion {
    pub center: [f64; 3],
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidMotion {
    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            center: [0.0; 3],
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: t,
        }
    }

    /// Rotation by `angle` about unit `axis` (Rodrigues).
    pub fn about(center: [f64; 3], axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Self {
        let (s, c) = angle.sin_cos();
        let [x, y, z] = axis;
        let t = 1.0 - c;
        let rotation = [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ];
        Self {
            center,
            rotation,
            translation,
        }
    }

    /// Displacement of `p`: `(R·d − d) + t` with `d = p − center`.
    pub fn flow(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        ];
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            let rd = self.rotation[r][0] * d[0]
                + self.rotation[r][1] * d[1]
                + self.rotation[r][2] * d[2];
            *o = (rd - d[r]) + self.translation[r];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub frame1: PointCloud<f64>,
    pub frame2: PointCloud<f64>,
    pub gt_flow: FlowField<f64>,
    /// `true` = occluded.
    pub occlusion_mask: Vec<bool>,
    pub cluster_id: Vec<usize>,
    pub context: DenseArray<f64>,
    pub motion_in: DenseArray<f64>,
}

impl SyntheticScene {
    pub fn len(&self) -> usize {
        self.frame1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame1.is_empty()
    }

    pub fn occluded_count(&self) -> usize {
        self.occlusion_mask.iter().filter(|&&o| o).count()
    }

    /// First-frame points moved by the ground-truth flow.
    pub fn warped(&self) -> Vec<[f64; 3]> {
        self.frame1
            .points()
            .iter()
            .zip(self.gt_flow.vectors())
            .map(|(p, f)| [p[0] + f[0], p[1] + f[1], p[2] + f[2]])
            .collect()
    }
}

pub(crate) fn streams(seed: u64) -> [SceneRng; 3] {
    let mut master = SceneRng::new(seed);
    [master.fork(), master.fork(), master.fork()]
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let [mut geo, _, _] = streams(cfg.seed);
    let (points, cluster_id, centers) = sample_clusters(cfg, &mut geo)?;
    let motions: Vec<RigidMotion> = centers
        .iter()
        .map(|&c| sample_motion(cfg, c, &mut geo))
        .collect();
    build_scene(cfg, points, cluster_id, &motions)
}

/// Same sampling of points as [`generate_scene`], but with caller-chosen
/// per-cluster motions.
pub fn generate_scene_with_motions(
    cfg: &SceneConfig,
    motions: &[RigidMotion],
) -> Result<SyntheticScene> {
    cfg.validate()?;
    if motions.len() != cfg.n_clusters {
        return Err(Error::Config(format!(
            "{} motions given for {} clusters",
            motions.len(),
            cfg.n_clusters
        )));
    }
    let [mut geo, _, _] = streams(cfg.seed);
    let (points, cluster_id, _) = sample_clusters(cfg, &mut geo)?;
    build_scene(cfg, points, cluster_id, motions)
}

/// Points, their cluster ids, and the cluster centers.
type ClusterSample = (Vec<[f64; 3]>, Vec<usize>, Vec<[f64; 3]>);

fn sample_clusters(cfg: &SceneConfig, rng: &mut SceneRng) -> Result<ClusterSample> {
    let s = cfg.cluster_spread;
    let min_d2 = cfg.min_separation * cfg.min_separation;
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(cfg.n_points());
    let mut ids = Vec::with_capacity(cfg.n_points());
    let mut centers = Vec::with_capacity(cfg.n_clusters);
    for c in 0..cfg.n_clusters {
        let center = [
            c as f64 * cfg.cluster_separation,
            rng.range(-s, s),
            rng.range(-s, s),
        ];
        centers.push(center);
        let parts = cfg.parts_per_cluster;
        for j in 0..cfg.points_per_cluster {
            let part = j * parts / cfg.points_per_cluster;
            let offset = (part as f64 - (parts - 1) as f64 / 2.0) * cfg.part_separation;
            let mut attempts = 0;
            let p = loop {
                let p = [
                    center[0] + s * rng.normal(),
                    center[1] + offset + s * rng.normal(),
                    center[2] + s * rng.normal(),
                ];
                if points.iter().all(|q| dist2(&p, q) >= min_d2) {
                    break p;
                }
                attempts += 1;
                if attempts > 1000 {
                    return Err(Error::Generation(format!(
                        "cannot place point with min separation {} m in cluster {c}",
                        cfg.min_separation
                    )));
                }
            };
            points.push(p);
            ids.push(c);
        }
    }
    Ok((points, ids, centers))
}

fn sample_motion(cfg: &SceneConfig, center: [f64; 3], rng: &mut SceneRng) -> RigidMotion {
    let t = cfg.translation_range;
    let translation = [rng.range(-t, t), rng.range(-t, t), rng.range(-t, t)];
    let raw = [rng.normal(), rng.normal(), rng.normal()];
    let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2])
        .sqrt()
        .max(1e-12);
    let axis = [raw[0] / norm, raw[1] / norm, raw[2] / norm];
    let angle = rng.range(-cfg.rotation_range, cfg.rotation_range);
    RigidMotion::about(center, axis, angle, translation)
}

fn build_scene(
    cfg: &SceneConfig,
    points: Vec<[f64; 3]>,
    cluster_id: Vec<usize>,
    motions: &[RigidMotion],
) -> Result<SyntheticScene> {
    let [_, mut occ_rng, _] = streams(cfg.seed);
    let frame1 = PointCloud::new(points)?;
    let flows: Vec<[f64; 3]> = frame1
        .points()
        .iter()
        .zip(&cluster_id)
        .map(|(&p, &c)| motions[c].flow(p))
        .collect();
    let gt_flow = FlowField::new(flows)?;
    let warped: Vec<[f64; 3]> = frame1
        .points()
        .iter()
        .zip(gt_flow.vectors())
        .map(|(p, f)| [p[0] + f[0], p[1] + f[1], p[2] + f[2]])
        .collect();

    let n = frame1.len();
    let (mask, frame2_idx) = match cfg.occlusion_mode {
        OcclusionMode::Fps => {
            let keep = n - cfg.occluded_target(n);
            let warped_cloud = PointCloud::new(warped.clone())?;
            let picked = fps(&warped_cloud, keep, 0)?;
            let mut mask = vec![true; n];
            picked.iter().for_each(|&i| mask[i] = false);
            (mask, picked)
        }
        mode => {
            let mask = if cfg.occlusion_fraction == 0.0 {
                vec![false; n]
            } else {
                let nbrs = knn(&frame1, cfg.neighbor_k.min(n - 1))?;
                let target = cfg.occluded_target(n);
                match mode {
                    OcclusionMode::Local => {
                        occlusion::select_local(target, &nbrs, vec![false; n], &mut occ_rng)?
                    }
                    OcclusionMode::Global => occlusion::select_global(target, &nbrs, &mut occ_rng)?,
                    _ => {
                        let regions = occlusion::select_global(target / 2, &nbrs, &mut occ_rng)?;
                        occlusion::select_local(target, &nbrs, regions, &mut occ_rng)?
                    }
                }
            };
            let kept = (0..n).filter(|&i| !mask[i]).collect();
            (mask, kept)
        }
    };
    if frame2_idx.is_empty() {
        return Err(Error::Generation("every point is occluded".into()));
    }
    let frame2 = PointCloud::new(frame2_idx.iter().map(|&i| warped[i]).collect())?;

    let mut scene = SyntheticScene {
        frame1,
        frame2,
        gt_flow,
        occlusion_mask: mask,
        cluster_id,
        context: DenseArray::zeros(n, cfg.context_dim),
        motion_in: DenseArray::zeros(n, cfg.motion_dim),
    };
    verify_correspondence(&scene, cfg.r_match)?;
    let (context, motion_in) = synth_features(&scene, cfg)?;
    scene.context = context;
    scene.motion_in = motion_in;
    Ok(scene)
}

/// Brute-force check of the occlusion contract: visible points land within
/// 1e-9 m of a second-frame point, occluded ones farther than `r_match`.
pub fn verify_correspondence(scene: &SyntheticScene, r_match: f64) -> Result<()> {
    for (i, w) in scene.warped().iter().enumerate() {
        let d = scene
            .frame2
            .points()
            .iter()
            .map(|q| dist2(w, q))
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        let occluded = scene.occlusion_mask[i];
        if !occluded && d >= 1e-9 {
            return Err(Error::Generation(format!(
                "visible point {i} has no counterpart (nearest {d} m)"
            )));
        }
        if occluded && d <= r_match {
            return Err(Error::Generation(format!(
                "occluded point {i} is within {d} m of a second-frame point"
            )));
        }
    }
    Ok(())
}

/// Fraction of occluded points having at least one visible point among
/// their first-frame k nearest neighbors.
pub fn local_reachability(scene: &SyntheticScene, k: usize) -> Result<f64> {
    let nbrs = knn(&scene.frame1, k)?;
    let occluded: Vec<usize> = (0..scene.len())
        .filter(|&i| scene.occlusion_mask[i])
        .collect();
    if occluded.is_empty() {
        return Err(Error::NoPoints);
    }
    let reachable = occluded
        .iter()
        .filter(|&&i| nbrs.row(i).iter().any(|&j| !scene.occlusion_mask[j]))
        .count();
    Ok(reachable as f64 / occluded.len() as f64)
}
