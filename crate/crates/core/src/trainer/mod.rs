//! Supervised toy training of the aggregation module with a linear flow
//! readout, plus gradient verification and the paired experiments.

mod experiment;
mod gradcheck;
mod optim;

pub use experiment::{
    run_ablation, run_occlusion_experiment, train, train_on, ExperimentReport, OcclusionComparison,
    Variant,
};
pub use gradcheck::{
    default_check_config, grad_check, GradCheckOptions, GradCheckReport, GRADCHECK_MAX_POINTS,
};
pub use optim::{Optimizer, OptimizerKind};

use crate::error::{Error, Result};
use crate::flowmetrics::FlowField;
use crate::gma3d::{trace_forward, Aggregator, Gma3dConfig, Gma3dParams, LocalGeometry};
use crate::numkern::{join, DenseArray, Gradients, Linear, ParamSet, Tape, Var};
use crate::rng::SceneRng;
use crate::spatial::knn_with;
use crate::synthgen::{SceneConfig, SyntheticScene};

/// Branch switches mirroring the ablation variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    pub disable_local: bool,
    pub disable_global: bool,
    pub plain_aggregator: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Seeds parameter initialization; scene randomness comes from `scene.seed`.
    pub seed: u64,
    pub scene: SceneConfig,
    pub module: Gma3dConfig,
    pub ablation: Ablation,
    /// Holds `α` at its initial value of 0 (the no-aggregation baseline).
    pub freeze_alpha: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            seed: 0,
            scene: SceneConfig::default(),
            module: Gma3dConfig::default(),
            ablation: Ablation::default(),
            freeze_alpha: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "train.learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        self.optimizer.validate()?;
        self.scene.validate()?;
        let m = self.effective_module();
        m.validate()?;
        if m.context_dim != self.scene.context_dim || m.motion_dim != self.scene.motion_dim {
            return Err(Error::Config(format!(
                "module dims ({}, {}) differ from scene feature dims ({}, {})",
                m.context_dim, m.motion_dim, self.scene.context_dim, self.scene.motion_dim
            )));
        }
        Ok(())
    }

    /// Module config with the ablation switches applied.
    pub fn effective_module(&self) -> Gma3dConfig {
        let mut m = self.module.clone();
        m.use_local &= !self.ablation.disable_local;
        m.use_global &= !self.ablation.disable_global;
        if self.ablation.plain_aggregator {
            m.aggregator = Aggregator::PlainMlp;
        }
        m
    }
}

/// Aggregation module plus a linear `Dm → 3` flow decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pub gma: Gma3dParams<f64>,
    pub decoder: Linear<f64>,
}

#[derive(Debug, Clone)]
struct ModelVars {
    gma: crate::gma3d::Gma3dVars,
    decoder: crate::numkern::LinearVars,
}

impl ModelVars {
    fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.gma.vars(&mut out);
        self.decoder.vars(&mut out);
        out
    }
}

impl FlowModel {
    pub fn init(cfg: &Gma3dConfig, seed: u64) -> Result<Self> {
        let mut rng = SceneRng::new(seed);
        let gma = Gma3dParams::init(cfg, &mut rng)?;
        let decoder = Linear::init(cfg.motion_dim, 3, &mut rng);
        Ok(Self { gma, decoder })
    }

    fn trace(&self, tape: &Tape<f64>) -> ModelVars {
        ModelVars {
            gma: self.gma.trace(tape),
            decoder: self.decoder.trace(tape),
        }
    }
}

impl ParamSet<f64> for FlowModel {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a DenseArray<f64>)>) {
        self.gma.tensors(&join(prefix, "gma"), out);
        self.decoder.tensors(&join(prefix, "decoder"), out);
    }

    fn tensors_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut DenseArray<f64>)>,
    ) {
        self.gma.tensors_mut(&join(prefix, "gma"), out);
        self.decoder.tensors_mut(&join(prefix, "decoder"), out);
    }
}

/// Mean over points of the squared Euclidean flow error.
pub fn loss_epe(pred: &FlowField<f64>, gt: &FlowField<f64>) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Shape {
            op: "loss_epe",
            lhs: vec![pred.len(), 3],
            rhs: vec![gt.len(), 3],
        });
    }
    let total: f64 = pred
        .vectors()
        .iter()
        .zip(gt.vectors())
        .map(|(p, g)| (0..3).map(|d| (p[d] - g[d]) * (p[d] - g[d])).sum::<f64>())
        .sum();
    Ok(total / gt.len() as f64)
}

/// Per-point linear readout `y_tilde · W + b`.
pub fn decode_flow(decoder: &Linear<f64>, y_tilde: &DenseArray<f64>) -> Result<FlowField<f64>> {
    if decoder.out_dim() != 3 {
        return Err(Error::Parameter(format!(
            "flow decoder must output 3 values, has {}",
            decoder.out_dim()
        )));
    }
    let tape = Tape::new();
    let vars = decoder.trace(&tape);
    let x = tape.constant(y_tilde.clone());
    let out = vars.forward(&tape, x)?;
    let flow = tape.value_cloned(out);
    FlowField::from_array(&flow)
}

/// Everything a forward pass needs from one scene.
#[derive(Debug, Clone)]
pub struct SceneInputs {
    pub geometry: LocalGeometry<f64>,
    pub context: DenseArray<f64>,
    pub motion: DenseArray<f64>,
    pub gt: DenseArray<f64>,
}

impl SceneInputs {
    pub fn new(scene: &SyntheticScene, module: &Gma3dConfig) -> Result<Self> {
        let nbrs = knn_with(&scene.frame1, module.k, module.include_self)?;
        let geometry =
            LocalGeometry::for_config(module, &scene.frame1, Some(&scene.frame2), &nbrs)?;
        Ok(Self {
            geometry,
            context: scene.context.clone(),
            motion: scene.motion_in.clone(),
            gt: scene.gt_flow.to_array(),
        })
    }
}

struct Traced {
    tape: Tape<f64>,
    vars: Vec<Var>,
    flow: Var,
    loss: Var,
}

fn trace_loss(model: &FlowModel, module: &Gma3dConfig, inputs: &SceneInputs) -> Result<Traced> {
    let tape = Tape::new();
    let mv = model.trace(&tape);
    let x = tape.constant(inputs.context.clone());
    let y = tape.constant(inputs.motion.clone());
    let fv = trace_forward(&tape, &mv.gma, module, &inputs.geometry, x, y)?;
    let flow = mv.decoder.forward(&tape, fv.y_tilde)?;
    let gt = tape.constant(inputs.gt.clone());
    let diff = tape.sub(flow, gt)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq)?;
    let loss = tape.scale(total, 1.0 / inputs.gt.rows() as f64)?;
    Ok(Traced {
        vars: mv.vars(),
        tape,
        flow,
        loss,
    })
}

/// Loss and predicted flow without gradients.
pub fn evaluate_model(
    model: &FlowModel,
    module: &Gma3dConfig,
    inputs: &SceneInputs,
) -> Result<(f64, DenseArray<f64>)> {
    let t = trace_loss(model, module, inputs)?;
    let loss = t.tape.value(t.loss).item();
    let flow = t.tape.value_cloned(t.flow);
    Ok((loss, flow))
}

/// Loss plus one gradient per model tensor, in [`ParamSet`] order.
pub fn loss_and_grads(
    model: &FlowModel,
    module: &Gma3dConfig,
    inputs: &SceneInputs,
) -> Result<(f64, Vec<DenseArray<f64>>)> {
    let t = trace_loss(model, module, inputs)?;
    let loss = t.tape.value(t.loss).item();
    if !loss.is_finite() {
        return Ok((loss, Vec::new()));
    }
    let grads: Gradients<f64> = t.tape.backward(t.loss)?;
    let out = t
        .vars
        .iter()
        .map(|&v| {
            grads
                .get(v)
                .cloned()
                .ok_or_else(|| Error::Usage("missing gradient for a parameter".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, out))
}
