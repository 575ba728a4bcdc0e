//! `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys live under `scene.`, `module.` and `train.`; each has a default, so
//! an empty file is a valid config. Unknown and repeated keys are errors.
//! Module feature widths follow the scene's `context_dim` / `motion_dim`.

use std::path::Path;
use std::str::FromStr;

use gma3d_core::trainer::{GradCheckOptions, OptimizerKind, TrainConfig};
use gma3d_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub gradcheck: GradCheckOptions,
}

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{raw}'")))
}

fn keyword<T: FromStr<Err = Error>>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|e: Error| Error::Config(format!("key '{key}': {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut opt = PendingOptimizer::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got '{line}'",
                    lineno + 1
                ))
            })?;
            let (key, raw) = (key.trim(), raw.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!(
                    "line {}: key '{key}' given twice",
                    lineno + 1
                )));
            }
            cfg.set(&mut opt, key, raw)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip(e))))?;
            seen.push(key.to_string());
        }
        cfg.train.optimizer = opt.build();
        cfg.sync_dims();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.train.scene;
        let m = &self.train.module;
        let t = &self.train;
        let (b1, b2, eps) = match t.optimizer {
            OptimizerKind::Adam { beta1, beta2, eps } => (beta1, beta2, eps),
            OptimizerKind::Sgd => (0.9, 0.999, 1e-8),
        };
        vec![
            ("scene.n_clusters", s.n_clusters.to_string()),
            ("scene.points_per_cluster", s.points_per_cluster.to_string()),
            ("scene.cluster_spread", num(s.cluster_spread)),
            ("scene.parts_per_cluster", s.parts_per_cluster.to_string()),
            ("scene.part_separation", num(s.part_separation)),
            ("scene.cluster_separation", num(s.cluster_separation)),
            ("scene.translation_range", num(s.translation_range)),
            ("scene.rotation_range", num(s.rotation_range)),
            ("scene.occlusion_fraction", num(s.occlusion_fraction)),
            ("scene.occlusion_mode", s.occlusion_mode.to_string()),
            ("scene.neighbor_k", s.neighbor_k.to_string()),
            ("scene.r_match", num(s.r_match)),
            ("scene.min_separation", num(s.min_separation)),
            ("scene.context_dim", s.context_dim.to_string()),
            ("scene.motion_dim", s.motion_dim.to_string()),
            ("scene.feature_noise_std", num(s.feature_noise_std)),
            ("scene.motion_embedding", s.motion_embedding.to_string()),
            ("scene.occluded_motion", s.occluded_motion.to_string()),
            ("scene.occluded_noise_std", num(s.occluded_noise_std)),
            ("scene.seed", s.seed.to_string()),
            ("module.qk_dim", m.qk_dim.to_string()),
            ("module.encoder_dim", m.encoder_dim.to_string()),
            ("module.encoder_hidden", m.encoder_hidden.to_string()),
            ("module.scorer_hidden", m.scorer_hidden.to_string()),
            ("module.k", m.k.to_string()),
            ("module.include_self", m.include_self.to_string()),
            ("module.global_logits", m.global_logits.to_string()),
            ("module.logit_scaling", m.logit_scaling.to_string()),
            ("module.global_weight_map", m.global_weight_map.to_string()),
            (
                "module.global_weight_hidden",
                m.global_weight_hidden.to_string(),
            ),
            ("module.neighbor_frame", m.neighbor_frame.to_string()),
            ("module.use_local", m.use_local.to_string()),
            ("module.use_global", m.use_global.to_string()),
            ("module.aggregator", m.aggregator.to_string()),
            ("module.plain_hidden", m.plain_hidden.to_string()),
            ("train.steps", t.steps.to_string()),
            ("train.learning_rate", num(t.learning_rate)),
            ("train.optimizer", t.optimizer.name().to_string()),
            ("train.adam_beta1", num(b1)),
            ("train.adam_beta2", num(b2)),
            ("train.adam_eps", num(eps)),
            ("train.seed", t.seed.to_string()),
            ("train.disable_local", t.ablation.disable_local.to_string()),
            (
                "train.disable_global",
                t.ablation.disable_global.to_string(),
            ),
            (
                "train.plain_aggregator",
                t.ablation.plain_aggregator.to_string(),
            ),
            ("train.freeze_alpha", t.freeze_alpha.to_string()),
            (
                "train.gradcheck_alpha",
                num(self.gradcheck.alpha.unwrap_or(0.0)),
            ),
            ("train.gradcheck_eps", num(self.gradcheck.eps)),
        ]
    }

    /// Canonical text form; parses back to an equal config.
    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    fn sync_dims(&mut self) {
        self.train.module.context_dim = self.train.scene.context_dim;
        self.train.module.motion_dim = self.train.scene.motion_dim;
    }

    fn set(&mut self, opt: &mut PendingOptimizer, key: &str, raw: &str) -> Result<()> {
        match key {
            "scene.n_clusters" => self.train.scene.n_clusters = value(key, raw)?,
            "scene.points_per_cluster" => self.train.scene.points_per_cluster = value(key, raw)?,
            "scene.cluster_spread" => self.train.scene.cluster_spread = value(key, raw)?,
            "scene.parts_per_cluster" => self.train.scene.parts_per_cluster = value(key, raw)?,
            "scene.part_separation" => self.train.scene.part_separation = value(key, raw)?,
            "scene.cluster_separation" => self.train.scene.cluster_separation = value(key, raw)?,
            "scene.translation_range" => self.train.scene.translation_range = value(key, raw)?,
            "scene.rotation_range" => self.train.scene.rotation_range = value(key, raw)?,
            "scene.occlusion_fraction" => self.train.scene.occlusion_fraction = value(key, raw)?,
            "scene.occlusion_mode" => self.train.scene.occlusion_mode = keyword(key, raw)?,
            "scene.neighbor_k" => self.train.scene.neighbor_k = value(key, raw)?,
            "scene.r_match" => self.train.scene.r_match = value(key, raw)?,
            "scene.min_separation" => self.train.scene.min_separation = value(key, raw)?,
            "scene.context_dim" => self.train.scene.context_dim = value(key, raw)?,
            "scene.motion_dim" => self.train.scene.motion_dim = value(key, raw)?,
            "scene.feature_noise_std" => self.train.scene.feature_noise_std = value(key, raw)?,
            "scene.motion_embedding" => self.train.scene.motion_embedding = keyword(key, raw)?,
            "scene.occluded_motion" => self.train.scene.occluded_motion = keyword(key, raw)?,
            "scene.occluded_noise_std" => self.train.scene.occluded_noise_std = value(key, raw)?,
            "scene.seed" => self.train.scene.seed = value(key, raw)?,
            "module.qk_dim" => self.train.module.qk_dim = value(key, raw)?,
            "module.encoder_dim" => self.train.module.encoder_dim = value(key, raw)?,
            "module.encoder_hidden" => self.train.module.encoder_hidden = value(key, raw)?,
            "module.scorer_hidden" => self.train.module.scorer_hidden = value(key, raw)?,
            "module.k" => self.train.module.k = value(key, raw)?,
            "module.include_self" => self.train.module.include_self = value(key, raw)?,
            "module.global_logits" => self.train.module.global_logits = keyword(key, raw)?,
            "module.logit_scaling" => self.train.module.logit_scaling = value(key, raw)?,
            "module.global_weight_map" => self.train.module.global_weight_map = value(key, raw)?,
            "module.global_weight_hidden" => {
                self.train.module.global_weight_hidden = value(key, raw)?
            }
            "module.neighbor_frame" => self.train.module.neighbor_frame = keyword(key, raw)?,
            "module.use_local" => self.train.module.use_local = value(key, raw)?,
            "module.use_global" => self.train.module.use_global = value(key, raw)?,
            "module.aggregator" => self.train.module.aggregator = keyword(key, raw)?,
            "module.plain_hidden" => self.train.module.plain_hidden = value(key, raw)?,
            "train.steps" => self.train.steps = value(key, raw)?,
            "train.learning_rate" => self.train.learning_rate = value(key, raw)?,
            "train.optimizer" => match raw {
                "sgd" | "adam" => opt.name = raw.to_string(),
                other => {
                    return Err(Error::Config(format!(
                        "key '{key}': unknown optimizer '{other}' (expected sgd or adam)"
                    )))
                }
            },
            "train.adam_beta1" => opt.beta1 = value(key, raw)?,
            "train.adam_beta2" => opt.beta2 = value(key, raw)?,
            "train.adam_eps" => opt.eps = value(key, raw)?,
            "train.seed" => self.train.seed = value(key, raw)?,
            "train.disable_local" => self.train.ablation.disable_local = value(key, raw)?,
            "train.disable_global" => self.train.ablation.disable_global = value(key, raw)?,
            "train.plain_aggregator" => self.train.ablation.plain_aggregator = value(key, raw)?,
            "train.freeze_alpha" => self.train.freeze_alpha = value(key, raw)?,
            "train.gradcheck_alpha" => self.gradcheck.alpha = Some(value(key, raw)?),
            "train.gradcheck_eps" => self.gradcheck.eps = value(key, raw)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

#[derive(Debug)]
struct PendingOptimizer {
    name: String,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Default for PendingOptimizer {
    fn default() -> Self {
        Self {
            name: "adam".into(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl PendingOptimizer {
    fn build(&self) -> OptimizerKind {
        match self.name.as_str() {
            "sgd" => OptimizerKind::Sgd,
            _ => OptimizerKind::Adam {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
