use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::flowmetrics::{evaluate_split, FlowField, SplitMetrics};
use crate::numkern::ParamSet;
use crate::synthgen::{generate_scene, SyntheticScene};
use crate::trainer::{
    evaluate_model, loss_and_grads, Ablation, FlowModel, Optimizer, SceneInputs, TrainConfig,
};

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Variant label; `"train"` for a single run.
    pub variant: String,
    /// Loss before each optimizer step; length equals `steps`.
    pub losses: Vec<f64>,
    pub initial: SplitMetrics,
    pub final_metrics: SplitMetrics,
    pub final_loss: f64,
    pub config: TrainConfig,
    /// Not part of any serialized output.
    pub wall_time: Duration,
    pub model: FlowModel,
    pub prediction: FlowField<f64>,
}

impl ExperimentReport {
    /// Final occluded-point EPE, if any point is occluded.
    pub fn occluded_epe(&self) -> Option<f64> {
        self.final_metrics.occluded.as_ref().ok().map(|m| m.epe_m)
    }
}

pub fn train(cfg: &TrainConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let scene = generate_scene(&cfg.scene)?;
    train_on(cfg, &scene, "train")
}

/// Trains on a given scene (which must match `cfg.scene` dims).
pub fn train_on(
    cfg: &TrainConfig,
    scene: &SyntheticScene,
    variant: &str,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let module = cfg.effective_module();
    if scene.context.cols() != module.context_dim || scene.motion_in.cols() != module.motion_dim {
        return Err(Error::Config(format!(
            "scene features are {}/{} wide, module expects {}/{}",
            scene.context.cols(),
            scene.motion_in.cols(),
            module.context_dim,
            module.motion_dim
        )));
    }
    let inputs = SceneInputs::new(scene, &module)?;
    let mut model = FlowModel::init(&module, cfg.seed)?;

    let (_, flow0) = evaluate_model(&model, &module, &inputs)?;
    let initial = split(&flow0, scene, 0)?;

    let names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
    let sizes: Vec<usize> = model.named_tensors().iter().map(|(_, t)| t.len()).collect();
    let frozen = names
        .iter()
        .map(|n| cfg.freeze_alpha && n == "gma.alpha")
        .collect();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &sizes, frozen);

    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (loss, grads) = loss_and_grads(&model, &module, &inputs)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        losses.push(loss);
        let mut params: Vec<_> = model
            .named_tensors_mut()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        opt.step(&mut params, &grads)?;
    }

    let (final_loss, flow) = evaluate_model(&model, &module, &inputs)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            step: cfg.steps,
            loss: final_loss,
        });
    }
    let final_metrics = split(&flow, scene, cfg.steps)?;
    Ok(ExperimentReport {
        variant: variant.to_string(),
        losses,
        initial,
        final_metrics,
        final_loss,
        config: cfg.clone(),
        wall_time: start.elapsed(),
        model,
        prediction: FlowField::from_array(&flow)?,
    })
}

fn split(
    flow: &crate::numkern::DenseArray<f64>,
    scene: &SyntheticScene,
    step: usize,
) -> Result<SplitMetrics> {
    let pred = FlowField::from_array(flow).map_err(|_| Error::Divergence {
        step,
        loss: f64::NAN,
    })?;
    evaluate_split(&pred, &scene.gt_flow, &scene.occlusion_mask)
}

/// Full model against the `α = 0` baseline on one scene and one seed.
#[derive(Debug, Clone)]
pub struct OcclusionComparison {
    pub full: ExperimentReport,
    pub baseline: ExperimentReport,
}

pub fn run_occlusion_experiment(cfg: &TrainConfig) -> Result<OcclusionComparison> {
    cfg.validate()?;
    let scene = generate_scene(&cfg.scene)?;
    let full = train_on(cfg, &scene, "full")?;
    let baseline_cfg = TrainConfig {
        freeze_alpha: true,
        ..cfg.clone()
    };
    let baseline = train_on(&baseline_cfg, &scene, "baseline")?;
    Ok(OcclusionComparison { full, baseline })
}

/// The five ablation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    PlainAggregator,
    NoLocal,
    NoGlobal,
    BackboneOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::PlainAggregator,
        Variant::NoLocal,
        Variant::NoGlobal,
        Variant::BackboneOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::PlainAggregator => "plain_mlp",
            Variant::NoLocal => "no_local",
            Variant::NoGlobal => "no_global",
            Variant::BackboneOnly => "backbone",
        }
    }

    /// `base` with this variant's switches applied on top.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.ablation = Ablation::default();
        cfg.freeze_alpha = false;
        match self {
            Variant::Full => {}
            Variant::PlainAggregator => cfg.ablation.plain_aggregator = true,
            Variant::NoLocal => cfg.ablation.disable_local = true,
            Variant::NoGlobal => cfg.ablation.disable_global = true,
            Variant::BackboneOnly => cfg.freeze_alpha = true,
        }
        cfg
    }
}

/// Trains every variant on the same scene with the same seeds. Variants run
/// on separate threads; results come back in [`Variant::ALL`] order.
pub fn run_ablation(cfg: &TrainConfig) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    let scene = generate_scene(&cfg.scene)?;
    let results: Vec<Result<ExperimentReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = Variant::ALL
            .iter()
            .map(|&v| {
                let scene = &scene;
                s.spawn(move || train_on(&v.apply(cfg), scene, v.name()))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}
