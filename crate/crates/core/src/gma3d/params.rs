use crate::error::{Error, Result};
use crate::gma3d::config::{Aggregator, Gma3dConfig};
use crate::numkern::{
    join, uniform_init, DenseArray, MlpParams, MlpVars, NormActHead, NormActVars, ParamSet, Tape,
    Var,
};
use crate::rng::SceneRng;
use crate::scalar::Real;

/// Every learnable weight of the module.
#[derive(Debug, Clone, PartialEq)]
pub struct Gma3dParams<T> {
    /// Shared query/key projection, `Dc×Dqk`.
    pub qk_proj: DenseArray<T>,
    /// Value projection, `Dm×Dm`.
    pub value_proj: DenseArray<T>,
    /// Displacement encoder, `3 → De`.
    pub local_encoder: MlpParams<T>,
    /// Neighbor scorer, `De + 2·Dc → 1`.
    pub local_scorer: MlpParams<T>,
    pub offset_head: NormActHead<T>,
    /// Optional positive scalar map applied to each global weight.
    pub global_weight_map: Option<MlpParams<T>>,
    /// Replaces the offset head in the plain-aggregator variant.
    pub plain_aggregator: Option<MlpParams<T>>,
    /// Residual gate, `1×1`.
    pub alpha: DenseArray<T>,
}

/// Tape handles mirroring [`Gma3dParams`].
#[derive(Debug, Clone)]
pub struct Gma3dVars {
    pub qk_proj: Var,
    pub value_proj: Var,
    pub local_encoder: MlpVars,
    pub local_scorer: MlpVars,
    pub offset_head: NormActVars,
    pub global_weight_map: Option<MlpVars>,
    pub plain_aggregator: Option<MlpVars>,
    pub alpha: Var,
}

impl<T: Real> Gma3dParams<T> {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases, unit head scale, `α = 0`.
    /// Shared parts are drawn first so variants of one config start alike.
    pub fn init(cfg: &Gma3dConfig, rng: &mut SceneRng) -> Result<Self> {
        cfg.validate()?;
        let qk_proj = uniform_init(cfg.context_dim, cfg.qk_dim, cfg.context_dim, rng);
        let value_proj = uniform_init(cfg.motion_dim, cfg.motion_dim, cfg.motion_dim, rng);
        let local_encoder = MlpParams::init(&cfg.encoder_dims(), rng);
        let local_scorer = MlpParams::init(&cfg.scorer_dims(), rng);
        let offset_head = NormActHead::init(cfg.motion_dim, rng);
        let global_weight_map = cfg
            .global_weight_map
            .then(|| MlpParams::init(&cfg.global_map_dims(), rng));
        let plain_aggregator = (cfg.aggregator == Aggregator::PlainMlp)
            .then(|| MlpParams::init(&cfg.plain_dims(), rng));
        Ok(Self {
            qk_proj,
            value_proj,
            local_encoder,
            local_scorer,
            offset_head,
            global_weight_map,
            plain_aggregator,
            alpha: DenseArray::zeros(1, 1),
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha.item()
    }

    pub fn set_alpha(&mut self, a: T) {
        self.alpha = DenseArray::scalar(a);
    }

    /// Checks every dimension chain against `cfg`.
    pub fn check(&self, cfg: &Gma3dConfig) -> Result<()> {
        let expect = |name: &str, got: &[usize], want: [usize; 2]| -> Result<()> {
            if got != want {
                return Err(Error::Parameter(format!(
                    "{name} has shape {got:?}, config needs {want:?}"
                )));
            }
            Ok(())
        };
        expect(
            "qk_proj",
            self.qk_proj.shape(),
            [cfg.context_dim, cfg.qk_dim],
        )?;
        expect(
            "value_proj",
            self.value_proj.shape(),
            [cfg.motion_dim, cfg.motion_dim],
        )?;
        expect("alpha", self.alpha.shape(), [1, 1])?;
        let mlp = |name: &str, m: &MlpParams<T>, inp: usize, out: usize| -> Result<()> {
            if m.in_dim() != inp || m.out_dim() != out {
                return Err(Error::Parameter(format!(
                    "{name} maps {} → {}, config needs {inp} → {out}",
                    m.in_dim(),
                    m.out_dim()
                )));
            }
            MlpParams::new(m.layers.clone()).map(|_| ())
        };
        mlp("local_encoder", &self.local_encoder, 3, cfg.encoder_dim)?;
        mlp(
            "local_scorer",
            &self.local_scorer,
            cfg.encoder_dim + 2 * cfg.context_dim,
            1,
        )?;
        expect(
            "offset_head.linear.weight",
            self.offset_head.linear.weight.shape(),
            [cfg.motion_dim, cfg.motion_dim],
        )?;
        match (&self.global_weight_map, cfg.global_weight_map) {
            (Some(m), true) => mlp("global_weight_map", m, 1, 1)?,
            (None, false) => {}
            _ => {
                return Err(Error::Parameter(
                    "global_weight_map presence differs from config".into(),
                ))
            }
        }
        match (&self.plain_aggregator, cfg.aggregator) {
            (Some(m), Aggregator::PlainMlp) => {
                mlp("plain_aggregator", m, cfg.motion_dim, cfg.motion_dim)?
            }
            (None, Aggregator::Offset) => {}
            _ => {
                return Err(Error::Parameter(
                    "plain_aggregator presence differs from config".into(),
                ))
            }
        }
        Ok(())
    }

    /// Registers every tensor as a trainable leaf, in [`ParamSet`] order.
    pub fn trace(&self, tape: &Tape<T>) -> Gma3dVars {
        Gma3dVars {
            qk_proj: tape.param(self.qk_proj.clone()),
            value_proj: tape.param(self.value_proj.clone()),
            local_encoder: self.local_encoder.trace(tape),
            local_scorer: self.local_scorer.trace(tape),
            offset_head: self.offset_head.trace(tape),
            global_weight_map: self.global_weight_map.as_ref().map(|m| m.trace(tape)),
            plain_aggregator: self.plain_aggregator.as_ref().map(|m| m.trace(tape)),
            alpha: tape.param(self.alpha.clone()),
        }
    }
}

impl Gma3dVars {
    /// Handles in [`ParamSet`] order.
    pub fn vars(&self, out: &mut Vec<Var>) {
        out.push(self.qk_proj);
        out.push(self.value_proj);
        self.local_encoder.vars(out);
        self.local_scorer.vars(out);
        self.offset_head.vars(out);
        if let Some(m) = &self.global_weight_map {
            m.vars(out);
        }
        if let Some(m) = &self.plain_aggregator {
            m.vars(out);
        }
        out.push(self.alpha);
    }
}

impl<T: Real> ParamSet<T> for Gma3dParams<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a DenseArray<T>)>) {
        out.push((join(prefix, "qk_proj"), &self.qk_proj));
        out.push((join(prefix, "value_proj"), &self.value_proj));
        self.local_encoder
            .tensors(&join(prefix, "local_encoder"), out);
        self.local_scorer
            .tensors(&join(prefix, "local_scorer"), out);
        self.offset_head.tensors(&join(prefix, "offset_head"), out);
        if let Some(m) = &self.global_weight_map {
            m.tensors(&join(prefix, "global_weight_map"), out);
        }
        if let Some(m) = &self.plain_aggregator {
            m.tensors(&join(prefix, "plain_aggregator"), out);
        }
        out.push((join(prefix, "alpha"), &self.alpha));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut DenseArray<T>)>) {
        out.push((join(prefix, "qk_proj"), &mut self.qk_proj));
        out.push((join(prefix, "value_proj"), &mut self.value_proj));
        self.local_encoder
            .tensors_mut(&join(prefix, "local_encoder"), out);
        self.local_scorer
            .tensors_mut(&join(prefix, "local_scorer"), out);
        self.offset_head
            .tensors_mut(&join(prefix, "offset_head"), out);
        if let Some(m) = &mut self.global_weight_map {
            m.tensors_mut(&join(prefix, "global_weight_map"), out);
        }
        if let Some(m) = &mut self.plain_aggregator {
            m.tensors_mut(&join(prefix, "plain_aggregator"), out);
        }
        out.push((join(prefix, "alpha"), &mut self.alpha));
    }
}
