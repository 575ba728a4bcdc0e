//! Local-global similarity maps and the offset aggregator.

use crate::error::{Error, Result};
use crate::gma3d::config::{Aggregator, GlobalLogits, Gma3dConfig, NeighborFrame};
use crate::gma3d::params::{Gma3dParams, Gma3dVars};
use crate::numkern::{DenseArray, MlpParams, MlpVars, Tape, Var};
use crate::scalar::Real;
use crate::spatial::{KdTree, NeighborIndex, PointCloud};

/// Per-point context (`N×Dc`) and motion (`N×Dm`) features of frame 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    context: DenseArray<T>,
    motion: DenseArray<T>,
}

impl<T: Real> FeatureSet<T> {
    pub fn new(context: DenseArray<T>, motion: DenseArray<T>) -> Result<Self> {
        if context.shape().len() != 2
            || motion.shape().len() != 2
            || context.rows() != motion.rows()
        {
            return Err(Error::Shape {
                op: "FeatureSet::new",
                lhs: context.shape().to_vec(),
                rhs: motion.shape().to_vec(),
            });
        }
        for (name, a) in [("context", &context), ("motion", &motion)] {
            if let Some(index) = a.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("FeatureSet {name}"),
                    index,
                });
            }
        }
        Ok(Self { context, motion })
    }

    pub fn len(&self) -> usize {
        self.context.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn context(&self) -> &DenseArray<T> {
        &self.context
    }

    pub fn motion(&self) -> &DenseArray<T> {
        &self.motion
    }

    fn check(&self, cfg: &Gma3dConfig) -> Result<()> {
        if self.context.cols() != cfg.context_dim || self.motion.cols() != cfg.motion_dim {
            return Err(Error::Shape {
                op: "features vs config",
                lhs: vec![self.context.cols(), self.motion.cols()],
                rhs: vec![cfg.context_dim, cfg.motion_dim],
            });
        }
        Ok(())
    }
}

/// Row-stochastic similarity maps produced by one forward pass. A map is
/// `None` when its branch is disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap<T> {
    /// `N×N`
    pub global_weights: Option<DenseArray<T>>,
    /// `N×k`, aligned with the rows of the neighbor index.
    pub local_weights: Option<DenseArray<T>>,
}

/// Neighbor indices plus the displacement of every neighbor relative to its
/// center point, `N·k×3` in neighbor-index order.
#[derive(Debug, Clone)]
pub struct LocalGeometry<T> {
    neighbors: NeighborIndex,
    displacements: DenseArray<T>,
}

impl<T: Real> LocalGeometry<T> {
    /// `p_t^j − p_t^i` over the first frame.
    pub fn first_frame(cloud: &PointCloud<T>, nbrs: &NeighborIndex) -> Result<Self> {
        Self::build(cloud, nbrs, |j| cloud.point(j))
    }

    /// `p_{t+1}^j − p_t^i`, with `p_{t+1}^j` the second-frame point nearest
    /// to `p_t^j`.
    pub fn cross_frame(
        frame1: &PointCloud<T>,
        frame2: &PointCloud<T>,
        nbrs: &NeighborIndex,
    ) -> Result<Self> {
        let tree = KdTree::build(frame2);
        let anchors: Vec<[T; 3]> = frame1
            .points()
            .iter()
            .map(|p| frame2.point(tree.nearest(p, 1, None)[0].1))
            .collect();
        Self::build(frame1, nbrs, |j| anchors[j])
    }

    pub fn for_config(
        cfg: &Gma3dConfig,
        frame1: &PointCloud<T>,
        frame2: Option<&PointCloud<T>>,
        nbrs: &NeighborIndex,
    ) -> Result<Self> {
        match (cfg.neighbor_frame, frame2) {
            (NeighborFrame::First, _) => Self::first_frame(frame1, nbrs),
            (NeighborFrame::Cross, Some(f2)) => Self::cross_frame(frame1, f2, nbrs),
            (NeighborFrame::Cross, None) => Err(Error::Parameter(
                "cross-frame neighbor positions need the second frame".into(),
            )),
        }
    }

    fn build(
        cloud: &PointCloud<T>,
        nbrs: &NeighborIndex,
        pos: impl Fn(usize) -> [T; 3],
    ) -> Result<Self> {
        if nbrs.len() != cloud.len() {
            return Err(Error::Shape {
                op: "LocalGeometry",
                lhs: vec![nbrs.len(), nbrs.k()],
                rhs: vec![cloud.len(), 3],
            });
        }
        let mut data = Vec::with_capacity(nbrs.flat().len() * 3);
        for i in 0..cloud.len() {
            let pi = cloud.point(i);
            for &j in nbrs.row(i) {
                if j >= cloud.len() {
                    return Err(Error::Parameter(format!("neighbor index {j} out of range")));
                }
                let pj = pos(j);
                data.extend_from_slice(&[pj[0] - pi[0], pj[1] - pi[1], pj[2] - pi[2]]);
            }
        }
        Ok(Self {
            neighbors: nbrs.clone(),
            displacements: DenseArray::matrix(nbrs.flat().len(), 3, data)?,
        })
    }

    pub fn neighbors(&self) -> &NeighborIndex {
        &self.neighbors
    }

    pub fn displacements(&self) -> &DenseArray<T> {
        &self.displacements
    }

    fn center_indices(&self) -> Vec<usize> {
        let k = self.neighbors.k();
        (0..self.neighbors.len())
            .flat_map(|i| std::iter::repeat_n(i, k))
            .collect()
    }
}

/// Handles of one traced forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub y_tilde: Var,
    pub g_local: Option<Var>,
    pub g_global: Option<Var>,
    pub local_weights: Option<Var>,
    pub global_weights: Option<Var>,
}

/// `q = x·W_qk` (also the key), `v = y·V`.
pub fn trace_project<T: Real>(
    tape: &Tape<T>,
    vars: &Gma3dVars,
    context: Var,
    motion: Var,
) -> Result<(Var, Var)> {
    let q = tape.matmul(context, vars.qk_proj)?;
    let v = tape.matmul(motion, vars.value_proj)?;
    Ok((q, v))
}

/// Softmax over scaled dot-product logits, optionally followed by a positive
/// scalar map and row renormalization.
pub fn trace_global_weights<T: Real>(
    tape: &Tape<T>,
    q: Var,
    k: Var,
    cfg: &Gma3dConfig,
    weight_map: Option<&MlpVars>,
) -> Result<Var> {
    let dim = tape.value(q).cols();
    let kt = tape.transpose(k)?;
    let mut logits = tape.matmul(q, kt)?;
    if cfg.logit_scaling {
        logits = tape.scale(logits, T::one() / T::from_usize_lossy(dim).sqrt())?;
    }
    let w = tape.softmax_rows(logits)?;
    match weight_map {
        None => Ok(w),
        Some(map) => {
            let n = tape.value(w).rows();
            let flat = tape.reshape(w, vec![n * n, 1])?;
            let mapped = map.forward(tape, flat)?;
            let positive = tape.softplus(mapped)?;
            let square = tape.reshape(positive, vec![n, n])?;
            tape.normalize_rows(square)
        }
    }
}

/// Neighbor scores `MLP_score([MLP_enc(Δp), x_j, x_i])`, softmax over each
/// point's neighbors, then the weighted sum of neighbor values.
/// Returns `(g_local, local_weights)`.
pub fn trace_local<T: Real>(
    tape: &Tape<T>,
    vars: &Gma3dVars,
    geom: &LocalGeometry<T>,
    context: Var,
    v: Var,
) -> Result<(Var, Var)> {
    let n = tape.value(context).rows();
    let k = geom.neighbors.k();
    if geom.neighbors.len() != n || tape.value(v).rows() != n {
        return Err(Error::Shape {
            op: "aggregate_local",
            lhs: vec![geom.neighbors.len(), k],
            rhs: tape.shape(context),
        });
    }
    let disp = tape.constant(geom.displacements.clone());
    let enc = vars.local_encoder.forward(tape, disp)?;
    let x_j = tape.gather_rows(context, geom.neighbors.flat().to_vec())?;
    let x_i = tape.gather_rows(context, geom.center_indices())?;
    let edge = tape.concat_cols(&[enc, x_j, x_i])?;
    let scores = vars.local_scorer.forward(tape, edge)?;
    let scores = tape.reshape(scores, vec![n, k])?;
    let weights = tape.softmax_rows(scores)?;
    let g = tape.neighbor_sum(weights, v, geom.neighbors.flat().to_vec())?;
    Ok((g, weights))
}

/// Merges aggregated motion back into `y` per the configured aggregator.
pub fn trace_aggregate<T: Real>(
    tape: &Tape<T>,
    vars: &Gma3dVars,
    cfg: &Gma3dConfig,
    motion: Var,
    g_local: Option<Var>,
    g_global: Option<Var>,
) -> Result<Var> {
    let g = match (g_local, g_global) {
        (Some(l), Some(g)) => Some(tape.add(l, g)?),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    };
    match cfg.aggregator {
        Aggregator::Offset => {
            let offset_in = match g {
                Some(g) => tape.sub(motion, g)?,
                None => motion,
            };
            let g_offset = vars.offset_head.forward(tape, offset_in)?;
            let gated = tape.scale_by(vars.alpha, g_offset)?;
            tape.add(motion, gated)
        }
        Aggregator::PlainMlp => {
            let mlp = vars
                .plain_aggregator
                .as_ref()
                .ok_or_else(|| Error::Parameter("plain aggregator weights missing".into()))?;
            let input = match g {
                Some(g) => g,
                None => {
                    let rows = tape.value(motion).rows();
                    tape.constant(DenseArray::zeros(rows, cfg.motion_dim))
                }
            };
            let h = mlp.forward(tape, input)?;
            tape.add(motion, h)
        }
    }
}

/// Full traced forward pass.
pub fn trace_forward<T: Real>(
    tape: &Tape<T>,
    vars: &Gma3dVars,
    cfg: &Gma3dConfig,
    geom: &LocalGeometry<T>,
    context: Var,
    motion: Var,
) -> Result<ForwardVars> {
    let (q, v) = trace_project(tape, vars, context, motion)?;
    let (g_global, global_weights) = if cfg.use_global {
        let feat = match cfg.global_logits {
            GlobalLogits::Projected => q,
            GlobalLogits::RawContext => context,
        };
        let w = trace_global_weights(tape, feat, feat, cfg, vars.global_weight_map.as_ref())?;
        (Some(tape.matmul(w, v)?), Some(w))
    } else {
        (None, None)
    };
    let (g_local, local_weights) = if cfg.use_local {
        let (g, w) = trace_local(tape, vars, geom, context, v)?;
        (Some(g), Some(w))
    } else {
        (None, None)
    };
    let y_tilde = trace_aggregate(tape, vars, cfg, motion, g_local, g_global)?;
    Ok(ForwardVars {
        y_tilde,
        g_local,
        g_global,
        local_weights,
        global_weights,
    })
}

/// Result of an untraced forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gma3dOutput<T> {
    pub y_tilde: DenseArray<T>,
    pub attn: AttentionMap<T>,
    pub g_local: Option<DenseArray<T>>,
    pub g_global: Option<DenseArray<T>>,
}

impl<T: Real> Gma3dOutput<T> {
    /// `[y_tilde, y, context]`, the features a recurrent update would consume.
    pub fn downstream_features(&self, feats: &FeatureSet<T>) -> Result<DenseArray<T>> {
        DenseArray::concat_cols(&[&self.y_tilde, feats.motion(), feats.context()])
    }
}

/// Query/key/value projections. `q` and `k` come from the same shared matrix.
pub fn project_qkv<T: Real>(
    params: &Gma3dParams<T>,
    feats: &FeatureSet<T>,
) -> Result<(DenseArray<T>, DenseArray<T>, DenseArray<T>)> {
    let tape = Tape::new();
    let vars = params.trace(&tape);
    let x = tape.constant(feats.context().clone());
    let y = tape.constant(feats.motion().clone());
    let (q, v) = trace_project(&tape, &vars, x, y)?;
    let q = tape.value_cloned(q);
    Ok((q.clone(), q, tape.value_cloned(v)))
}

/// `N×N` row-stochastic global weights.
pub fn global_attention_weights<T: Real>(
    q: &DenseArray<T>,
    k: &DenseArray<T>,
    cfg: &Gma3dConfig,
    weight_map: Option<&MlpParams<T>>,
) -> Result<DenseArray<T>> {
    if q.cols() != k.cols() || q.rows() != k.rows() {
        return Err(Error::Shape {
            op: "global_attention_weights",
            lhs: q.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    let tape = Tape::new();
    let map = weight_map.map(|m| m.trace(&tape));
    let qv = tape.constant(q.clone());
    let kv = tape.constant(k.clone());
    let w = trace_global_weights(&tape, qv, kv, cfg, map.as_ref())?;
    Ok(tape.value_cloned(w))
}

/// `weights · v`.
pub fn aggregate_global<T: Real>(
    weights: &DenseArray<T>,
    v: &DenseArray<T>,
) -> Result<DenseArray<T>> {
    if weights.rows() != weights.cols() {
        return Err(Error::Shape {
            op: "aggregate_global",
            lhs: weights.shape().to_vec(),
            rhs: v.shape().to_vec(),
        });
    }
    weights.matmul(v)
}

/// First-frame local aggregation. Returns `(g_local, local_weights)`.
pub fn aggregate_local<T: Real>(
    params: &Gma3dParams<T>,
    cloud: &PointCloud<T>,
    feats: &FeatureSet<T>,
    v: &DenseArray<T>,
    nbrs: &NeighborIndex,
) -> Result<(DenseArray<T>, DenseArray<T>)> {
    if nbrs.len() != feats.len() || cloud.len() != feats.len() {
        return Err(Error::Shape {
            op: "aggregate_local",
            lhs: vec![nbrs.len(), nbrs.k()],
            rhs: feats.context().shape().to_vec(),
        });
    }
    let geom = LocalGeometry::first_frame(cloud, nbrs)?;
    let tape = Tape::new();
    let vars = params.trace(&tape);
    let x = tape.constant(feats.context().clone());
    let vv = tape.constant(v.clone());
    let (g, w) = trace_local(&tape, &vars, &geom, x, vv)?;
    Ok((tape.value_cloned(g), tape.value_cloned(w)))
}

/// `y + α · head(y − (g_local + g_global))`.
pub fn offset_aggregate<T: Real>(
    params: &Gma3dParams<T>,
    y: &DenseArray<T>,
    g_local: &DenseArray<T>,
    g_global: &DenseArray<T>,
) -> Result<DenseArray<T>> {
    y.require_same_shape(g_local, "offset_aggregate")?;
    y.require_same_shape(g_global, "offset_aggregate")?;
    let tape = Tape::new();
    let vars = params.trace(&tape);
    let yv = tape.constant(y.clone());
    let l = tape.constant(g_local.clone());
    let g = tape.constant(g_global.clone());
    let cfg = Gma3dConfig {
        aggregator: Aggregator::Offset,
        motion_dim: y.cols(),
        ..Gma3dConfig::default()
    };
    let out = trace_aggregate(&tape, &vars, &cfg, yv, Some(l), Some(g))?;
    Ok(tape.value_cloned(out))
}

/// Untraced forward over first-frame geometry (or cross-frame when the config
/// asks for it and `frame2` is supplied).
pub fn forward<T: Real>(
    params: &Gma3dParams<T>,
    cloud: &PointCloud<T>,
    feats: &FeatureSet<T>,
    nbrs: &NeighborIndex,
    cfg: &Gma3dConfig,
) -> Result<Gma3dOutput<T>> {
    forward_with_frames(params, cloud, None, feats, nbrs, cfg)
}

pub fn forward_with_frames<T: Real>(
    params: &Gma3dParams<T>,
    frame1: &PointCloud<T>,
    frame2: Option<&PointCloud<T>>,
    feats: &FeatureSet<T>,
    nbrs: &NeighborIndex,
    cfg: &Gma3dConfig,
) -> Result<Gma3dOutput<T>> {
    params.check(cfg)?;
    feats.check(cfg)?;
    if frame1.len() != feats.len() {
        return Err(Error::Shape {
            op: "forward",
            lhs: vec![frame1.len(), 3],
            rhs: feats.context().shape().to_vec(),
        });
    }
    let geom = LocalGeometry::for_config(cfg, frame1, frame2, nbrs)?;
    let tape = Tape::new();
    let vars = params.trace(&tape);
    let x = tape.constant(feats.context().clone());
    let y = tape.constant(feats.motion().clone());
    let out = trace_forward(&tape, &vars, cfg, &geom, x, y)?;
    let get = |v: Option<Var>| v.map(|v| tape.value_cloned(v));
    Ok(Gma3dOutput {
        y_tilde: tape.value_cloned(out.y_tilde),
        attn: AttentionMap {
            global_weights: get(out.global_weights),
            local_weights: get(out.local_weights),
        },
        g_local: get(out.g_local),
        g_global: get(out.g_global),
    })
}
