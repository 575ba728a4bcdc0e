use crate::error::{Error, Result};
use crate::numkern::{finite_diff_grad, relative_discrepancy, ParamSet, FD_EPS};
use crate::synthgen::generate_scene;
use crate::trainer::{evaluate_model, loss_and_grads, FlowModel, SceneInputs, TrainConfig};

/// Largest scene the finite-difference check accepts.
pub const GRADCHECK_MAX_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// `α` is set to this before checking so the gated branch carries
    /// gradient; `None` keeps the initial value.
    pub alpha: Option<f64>,
    pub eps: f64,
    /// Corrupts the first analytic gradient entry (`g·1.5 + 1`).
    pub inject_fault: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            alpha: Some(0.5),
            eps: FD_EPS,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_discrepancy: f64,
    pub worst_tensor: String,
    /// `(tensor name, discrepancy)` in parameter order.
    pub per_tensor: Vec<(String, f64)>,
    pub n_params: usize,
}

/// Reverse-mode gradients against central differences over every tensor of
/// the module and the decoder, on the scene described by `cfg`.
pub fn grad_check(cfg: &TrainConfig, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    cfg.validate()?;
    let n = cfg.scene.n_points();
    if n > GRADCHECK_MAX_POINTS {
        return Err(Error::Precondition(format!(
            "gradient check needs at most {GRADCHECK_MAX_POINTS} points, config has {n}"
        )));
    }
    let scene = generate_scene(&cfg.scene)?;
    let module = cfg.effective_module();
    let inputs = SceneInputs::new(&scene, &module)?;
    let mut model = FlowModel::init(&module, cfg.seed)?;
    if let Some(a) = opts.alpha {
        model.gma.set_alpha(a);
    }

    let (loss, mut analytic) = loss_and_grads(&model, &module, &inputs)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "gradient check loss".into(),
            index: 0,
        });
    }
    if opts.inject_fault {
        let g = &mut analytic[0].data_mut()[0];
        *g = *g * 1.5 + 1.0;
    }

    let names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut per_tensor = Vec::with_capacity(names.len());
    for (t, name) in names.iter().enumerate() {
        let x = model.named_tensors()[t].1.clone();
        let mut probe = model.clone();
        let numeric = finite_diff_grad(
            |value| {
                *probe.named_tensors_mut()[t].1 = value.clone();
                evaluate_model(&probe, &module, &inputs).map(|(l, _)| l)
            },
            &x,
            opts.eps,
        )
        .map_err(|e| match e {
            Error::NonFinite { index, .. } => Error::NonFinite {
                context: format!("finite differences of {name}"),
                index,
            },
            other => other,
        })?;
        per_tensor.push((name.clone(), relative_discrepancy(&analytic[t], &numeric)?));
    }
    let (worst_tensor, max_discrepancy) =
        per_tensor
            .iter()
            .fold((String::new(), 0.0f64), |(wn, wd), (n, d)| {
                if *d > wd || wn.is_empty() {
                    (n.clone(), *d)
                } else {
                    (wn, wd)
                }
            });
    Ok(GradCheckReport {
        max_discrepancy,
        worst_tensor,
        per_tensor,
        n_params: model.param_count(),
    })
}

/// Small instance used when no config is given: 12 points in two clusters,
/// 8-wide features, 3 neighbors, every optional branch enabled.
pub fn default_check_config() -> TrainConfig {
    use crate::gma3d::Gma3dConfig;
    use crate::synthgen::{OcclusionMode, SceneConfig};
    TrainConfig {
        steps: 0,
        seed: 7,
        scene: SceneConfig {
            n_clusters: 2,
            points_per_cluster: 6,
            occlusion_fraction: 0.25,
            occlusion_mode: OcclusionMode::Local,
            neighbor_k: 3,
            context_dim: 8,
            motion_dim: 8,
            feature_noise_std: 0.1,
            seed: 7,
            ..SceneConfig::default()
        },
        module: Gma3dConfig {
            context_dim: 8,
            motion_dim: 8,
            qk_dim: 4,
            encoder_dim: 4,
            encoder_hidden: 6,
            scorer_hidden: 6,
            k: 3,
            global_weight_map: true,
            global_weight_hidden: 4,
            ..Gma3dConfig::default()
        },
        ..TrainConfig::default()
    }
}
