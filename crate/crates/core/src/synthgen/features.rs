use crate::error::{Error, Result};
use crate::numkern::DenseArray;
use crate::synthgen::{streams, MotionEmbedding, OccludedMotion, SceneConfig, SyntheticScene};

/// Context: one-hot cluster code padded to `Dc`, plus Gaussian noise.
/// Motion: `flow · E` at visible points; zero or noise at occluded ones.
pub fn synth_features(
    scene: &SyntheticScene,
    cfg: &SceneConfig,
) -> Result<(DenseArray<f64>, DenseArray<f64>)> {
    if cfg.context_dim < cfg.n_clusters {
        return Err(Error::Config(format!(
            "scene.context_dim ({}) must be at least scene.n_clusters ({})",
            cfg.context_dim, cfg.n_clusters
        )));
    }
    let [_, _, mut rng] = streams(cfg.seed);
    let (n, dc, dm) = (scene.len(), cfg.context_dim, cfg.motion_dim);

    let embed: Vec<[f64; 3]> = match cfg.motion_embedding {
        MotionEmbedding::Identity => {
            if dm < 3 {
                return Err(Error::Config(
                    "identity motion embedding needs scene.motion_dim ≥ 3".into(),
                ));
            }
            (0..dm)
                .map(|j| {
                    let mut col = [0.0; 3];
                    if j < 3 {
                        col[j] = 1.0;
                    }
                    col
                })
                .collect()
        }
        MotionEmbedding::Random => {
            let mut e = vec![[0.0; 3]; dm];
            for r in 0..3 {
                for col in e.iter_mut() {
                    col[r] = rng.normal();
                }
            }
            e
        }
    };

    let mut context = Vec::with_capacity(n * dc);
    for &c in &scene.cluster_id {
        for j in 0..dc {
            let base = if j == c { 1.0 } else { 0.0 };
            context.push(base + cfg.feature_noise_std * rng.normal());
        }
    }

    let mut motion = Vec::with_capacity(n * dm);
    for (i, f) in scene.gt_flow.vectors().iter().enumerate() {
        if scene.occlusion_mask[i] {
            for _ in 0..dm {
                motion.push(match cfg.occluded_motion {
                    OccludedMotion::Zero => 0.0,
                    OccludedMotion::Noise => cfg.occluded_noise_std * rng.normal(),
                });
            }
        } else {
            for col in &embed {
                motion.push(f[0] * col[0] + f[1] * col[1] + f[2] * col[2]);
            }
        }
    }
    Ok((
        DenseArray::matrix(n, dc, context)?,
        DenseArray::matrix(n, dm, motion)?,
    ))
}
