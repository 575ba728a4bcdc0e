//! Loop-based reference implementations used as test oracles. Nothing here
//! calls library kernels; library types are only read for their data.
#![allow(dead_code, clippy::needless_range_loop)]

use gma3d_core::flowmetrics::FlowMetrics;
use gma3d_core::gma3d::{Aggregator, GlobalLogits, Gma3dConfig, Gma3dParams};
use gma3d_core::gma3d::{FeatureSet, Gma3dOutput};
use gma3d_core::numkern::{DenseArray, Linear, MlpParams, NormActHead, ParamSet};
use gma3d_core::rng::SceneRng;
use gma3d_core::spatial::{knn_with, NeighborIndex, PointCloud};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(a: &DenseArray<f64>) -> Mat {
    (0..a.rows()).map(|r| a.row(r).to_vec()).collect()
}

pub fn from_mat(m: &Mat) -> DenseArray<f64> {
    DenseArray::from_rows(m).unwrap()
}

pub fn max_diff(a: &Mat, b: &DenseArray<f64>) -> f64 {
    assert_eq!(a.len(), b.rows());
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        assert_eq!(row.len(), b.cols());
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(i, j)).abs());
        }
    }
    worst
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i][p] * b[p][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

pub fn linear(l: &Linear<f64>, x: &[f64]) -> Vec<f64> {
    let (inp, out) = (l.weight.rows(), l.weight.cols());
    assert_eq!(x.len(), inp);
    (0..out)
        .map(|j| {
            let mut s = l.bias.get(0, j);
            for (i, xi) in x.iter().enumerate() {
                s += xi * l.weight.get(i, j);
            }
            s
        })
        .collect()
}

pub fn mlp(p: &MlpParams<f64>, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, l) in p.layers.iter().enumerate() {
        h = linear(l, &h);
        if i + 1 < p.layers.len() {
            h = h.into_iter().map(relu).collect();
        }
    }
    h
}

/// Linear, per-column standardization (biased variance, eps 1e-5), affine, ReLU.
pub fn norm_act(head: &NormActHead<f64>, x: &Mat) -> Mat {
    let h: Mat = x.iter().map(|r| linear(&head.linear, r)).collect();
    let (n, d) = (h.len(), h[0].len());
    let mut out = vec![vec![0.0; d]; n];
    for c in 0..d {
        let mean = (0..n).map(|i| h[i][c]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (h[i][c] - mean).powi(2)).sum::<f64>() / n as f64;
        let denom = (var + 1e-5).sqrt();
        for i in 0..n {
            let z = (h[i][c] - mean) / denom;
            out[i][c] = relu(z * head.scale.get(0, c) + head.shift.get(0, c));
        }
    }
    out
}

/// Exact k nearest neighbors by full scan; ties by lower index.
pub fn brute_knn(points: &[[f64; 3]], k: usize, include_self: bool) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            let mut c: Vec<(f64, usize)> = (0..points.len())
                .filter(|&j| include_self || j != i)
                .map(|j| {
                    let d: f64 = (0..3).map(|a| (points[i][a] - points[j][a]).powi(2)).sum();
                    (d, j)
                })
                .collect();
            c.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            c.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

pub struct OracleOut {
    pub y_tilde: Mat,
    pub global_w: Option<Mat>,
    pub local_w: Option<Mat>,
    pub g_local: Option<Mat>,
    pub g_global: Option<Mat>,
}

/// Composed reference forward pass. Neighbor `j` sits at `anchors[j]` when
/// given, otherwise at `points[j]`.
pub fn forward(
    p: &Gma3dParams<f64>,
    points: &[[f64; 3]],
    anchors: Option<&[[f64; 3]]>,
    x: &Mat,
    y: &Mat,
    nbrs: &[Vec<usize>],
    cfg: &Gma3dConfig,
) -> OracleOut {
    let n = points.len();
    let q = matmul(x, &to_mat(&p.qk_proj));
    let v = matmul(y, &to_mat(&p.value_proj));
    let dm = v[0].len();

    let (global_w, g_global) = if cfg.use_global {
        let f = match cfg.global_logits {
            GlobalLogits::Projected => &q,
            GlobalLogits::RawContext => x,
        };
        let d = f[0].len();
        let scale = if cfg.logit_scaling {
            1.0 / (d as f64).sqrt()
        } else {
            1.0
        };
        let mut w: Mat = (0..n)
            .map(|i| {
                let logits: Vec<f64> = (0..n)
                    .map(|j| (0..d).map(|c| f[i][c] * f[j][c]).sum::<f64>() * scale)
                    .collect();
                softmax(&logits)
            })
            .collect();
        if let Some(map) = &p.global_weight_map {
            for row in w.iter_mut() {
                let mapped: Vec<f64> = row.iter().map(|&a| softplus(mlp(map, &[a])[0])).collect();
                let s: f64 = mapped.iter().sum();
                *row = mapped.iter().map(|m| m / s).collect();
            }
        }
        let g: Mat = (0..n)
            .map(|i| {
                (0..dm)
                    .map(|c| (0..n).map(|j| w[i][j] * v[j][c]).sum())
                    .collect()
            })
            .collect();
        (Some(w), Some(g))
    } else {
        (None, None)
    };

    let (local_w, g_local) = if cfg.use_local {
        let mut ws = Vec::with_capacity(n);
        let mut gs = Vec::with_capacity(n);
        for i in 0..n {
            let scores: Vec<f64> = nbrs[i]
                .iter()
                .map(|&j| {
                    let pj = anchors.map_or(points[j], |a| a[j]);
                    let disp = [
                        pj[0] - points[i][0],
                        pj[1] - points[i][1],
                        pj[2] - points[i][2],
                    ];
                    let mut edge = mlp(&p.local_encoder, &disp);
                    edge.extend_from_slice(&x[j]);
                    edge.extend_from_slice(&x[i]);
                    mlp(&p.local_scorer, &edge)[0]
                })
                .collect();
            let w = softmax(&scores);
            let g: Vec<f64> = (0..dm)
                .map(|c| nbrs[i].iter().zip(&w).map(|(&j, wj)| wj * v[j][c]).sum())
                .collect();
            ws.push(w);
            gs.push(g);
        }
        (Some(ws), Some(gs))
    } else {
        (None, None)
    };

    let g: Option<Mat> = match (&g_local, &g_global) {
        (Some(a), Some(b)) => Some(
            a.iter()
                .zip(b)
                .map(|(r, s)| r.iter().zip(s).map(|(u, w)| u + w).collect())
                .collect(),
        ),
        (Some(a), None) => Some(a.clone()),
        (None, Some(b)) => Some(b.clone()),
        (None, None) => None,
    };
    let y_tilde = match cfg.aggregator {
        Aggregator::Offset => {
            let z: Mat = match &g {
                Some(g) => y
                    .iter()
                    .zip(g)
                    .map(|(r, s)| r.iter().zip(s).map(|(a, b)| a - b).collect())
                    .collect(),
                None => y.clone(),
            };
            let h = norm_act(&p.offset_head, &z);
            let alpha = p.alpha.get(0, 0);
            y.iter()
                .zip(&h)
                .map(|(r, s)| r.iter().zip(s).map(|(a, b)| a + alpha * b).collect())
                .collect()
        }
        Aggregator::PlainMlp => {
            let m = p.plain_aggregator.as_ref().unwrap();
            let zero = vec![vec![0.0; dm]; n];
            let g = g.unwrap_or(zero);
            y.iter()
                .zip(&g)
                .map(|(r, s)| {
                    let h = mlp(m, s);
                    r.iter().zip(&h).map(|(a, b)| a + b).collect()
                })
                .collect()
        }
    };
    OracleOut {
        y_tilde,
        global_w,
        local_w,
        g_local,
        g_global,
    }
}

/// Points with coordinates uniform in a cube; general position in practice.
pub fn random_points(rng: &mut SceneRng, n: usize, side: f64) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            [
                rng.range(0.0, side),
                rng.range(0.0, side),
                rng.range(0.0, side),
            ]
        })
        .collect()
}

pub fn random_mat(rng: &mut SceneRng, rows: usize, cols: usize, scale: f64) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| scale * rng.normal()).collect())
        .collect()
}

/// Every parameter entry redrawn from `N(0, scale²)`; alpha set explicitly.
pub fn randomize(p: &mut Gma3dParams<f64>, rng: &mut SceneRng, scale: f64, alpha: f64) {
    for (_, t) in p.named_tensors_mut() {
        for v in t.data_mut() {
            *v = scale * rng.normal();
        }
    }
    p.set_alpha(alpha);
}

/// One randomized forward-pass setup.
pub struct Instance {
    pub cfg: Gma3dConfig,
    pub params: Gma3dParams<f64>,
    pub points: Vec<[f64; 3]>,
    pub x: Mat,
    pub y: Mat,
}

impl Instance {
    /// Random size in `[n_lo, n_hi]`, random dims, random branch and head
    /// options. Points are uniform in a cube, so distance ties have
    /// probability zero.
    pub fn random(seed: u64, n_lo: usize, n_hi: usize) -> Self {
        let mut rng = SceneRng::new(seed);
        let n = n_lo + rng.below(n_hi - n_lo + 1);
        let dc = 1 + rng.below(6);
        let dm = 1 + rng.below(6);
        let coin = |rng: &mut SceneRng| rng.below(2) == 1;
        let mut cfg = Gma3dConfig {
            context_dim: dc,
            motion_dim: dm,
            qk_dim: 1 + rng.below(5),
            encoder_dim: 1 + rng.below(4),
            encoder_hidden: rng.below(5),
            scorer_hidden: rng.below(6),
            k: 1 + rng.below((n - 1).min(8)),
            global_logits: if coin(&mut rng) {
                GlobalLogits::Projected
            } else {
                GlobalLogits::RawContext
            },
            logit_scaling: coin(&mut rng),
            global_weight_map: coin(&mut rng),
            global_weight_hidden: 1 + rng.below(4),
            aggregator: if rng.below(4) == 0 {
                Aggregator::PlainMlp
            } else {
                Aggregator::Offset
            },
            plain_hidden: rng.below(5),
            ..Gma3dConfig::default()
        };
        match rng.below(6) {
            0 => cfg.use_local = false,
            1 => cfg.use_global = false,
            _ => {}
        }
        let mut params = Gma3dParams::init(&cfg, &mut rng).unwrap();
        let alpha = rng.range(0.2, 2.0);
        randomize(&mut params, &mut rng, 0.7, alpha);
        let points = random_points(&mut rng, n, 2.0);
        let x = random_mat(&mut rng, n, dc, 1.0);
        let y = random_mat(&mut rng, n, dm, 1.0);
        Self {
            cfg,
            params,
            points,
            x,
            y,
        }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn cloud(&self) -> PointCloud<f64> {
        PointCloud::new(self.points.clone()).unwrap()
    }

    pub fn feats(&self) -> FeatureSet<f64> {
        FeatureSet::new(from_mat(&self.x), from_mat(&self.y)).unwrap()
    }

    pub fn nbrs(&self) -> NeighborIndex {
        knn_with(&self.cloud(), self.cfg.k, self.cfg.include_self).unwrap()
    }

    pub fn run(&self) -> Gma3dOutput<f64> {
        gma3d_core::gma3d::forward(
            &self.params,
            &self.cloud(),
            &self.feats(),
            &self.nbrs(),
            &self.cfg,
        )
        .unwrap()
    }

    pub fn oracle(&self) -> OracleOut {
        let nbrs = brute_knn(&self.points, self.cfg.k, self.cfg.include_self);
        forward(
            &self.params,
            &self.points,
            None,
            &self.x,
            &self.y,
            &nbrs,
            &self.cfg,
        )
    }

    /// Inputs reordered so that new point `i` is old point `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            cfg: self.cfg.clone(),
            params: self.params.clone(),
            points: perm.iter().map(|&i| self.points[i]).collect(),
            x: perm.iter().map(|&i| self.x[i].clone()).collect(),
            y: perm.iter().map(|&i| self.y[i].clone()).collect(),
        }
    }
}

/// Largest deviation of any row sum from 1, and the smallest entry.
pub fn row_stats(w: &DenseArray<f64>) -> (f64, f64) {
    let mut dev = 0.0f64;
    let mut min = f64::INFINITY;
    for r in 0..w.rows() {
        let row = w.row(r);
        dev = dev.max((row.iter().sum::<f64>() - 1.0).abs());
        min = row.iter().cloned().fold(min, f64::min);
    }
    (dev, min)
}

/// Max deviation between `forward(π·inputs)` and `π·forward(inputs)`, with
/// global weights permuted on both axes and local rows permuted.
pub fn equivariance_gap(inst: &Instance, perm: &[usize]) -> f64 {
    let base = inst.run();
    let moved = inst.permuted(perm).run();
    let n = inst.n();
    let mut gap = 0.0f64;
    for (i, &pi) in perm.iter().enumerate() {
        for (a, b) in moved.y_tilde.row(i).iter().zip(base.y_tilde.row(pi)) {
            gap = gap.max((a - b).abs());
        }
        if let (Some(wm), Some(wb)) = (&moved.attn.local_weights, &base.attn.local_weights) {
            for (a, b) in wm.row(i).iter().zip(wb.row(pi)) {
                gap = gap.max((a - b).abs());
            }
        }
        if let (Some(wm), Some(wb)) = (&moved.attn.global_weights, &base.attn.global_weights) {
            for j in 0..n {
                gap = gap.max((wm.get(i, j) - wb.get(pi, perm[j])).abs());
            }
        }
    }
    gap
}

pub fn random_permutation(rng: &mut SceneRng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut p);
    p
}

/// Greedy farthest point sampling by exhaustive enumeration: every round
/// recomputes each candidate's distance to the whole selected set.
pub fn fps_by_enumeration(points: &[[f64; 3]], m: usize, seed: usize) -> Vec<usize> {
    let dist = |a: &[f64; 3], b: &[f64; 3]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };
    let mut chosen = vec![seed];
    while chosen.len() < m {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| dist(p, &points[c]))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

/// Per-point reimplementation: counts are accumulated point by point, with
/// the thresholds written out literally.
pub fn brute_metrics(
    pred: &[[f64; 3]],
    gt: &[[f64; 3]],
    mask: Option<&[bool]>,
) -> Option<FlowMetrics> {
    let mut n = 0usize;
    let (mut sum, mut strict, mut relax, mut out) = (0.0, 0usize, 0usize, 0usize);
    for i in 0..gt.len() {
        if let Some(m) = mask {
            if !m[i] {
                continue;
            }
        }
        let d = [
            pred[i][0] - gt[i][0],
            pred[i][1] - gt[i][1],
            pred[i][2] - gt[i][2],
        ];
        let e = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let g = (gt[i][0] * gt[i][0] + gt[i][1] * gt[i][1] + gt[i][2] * gt[i][2]).sqrt();
        n += 1;
        sum += e;
        let rel_below = |t: f64| g != 0.0 && e / g < t;
        let rel_above = |t: f64| g != 0.0 && e / g > t;
        if e < 0.05 || rel_below(0.05) {
            strict += 1;
        }
        if e < 0.1 || rel_below(0.1) {
            relax += 1;
        }
        if e > 0.3 || rel_above(0.3) {
            out += 1;
        }
    }
    (n > 0).then(|| FlowMetrics {
        epe_m: sum / n as f64,
        acc_strict: strict as f64 / n as f64,
        acc_relax: relax as f64 / n as f64,
        outliers: out as f64 / n as f64,
        n_points: n,
    })
}

/// Pairs built so per-point errors and relative errors land on, just below
/// and just above each threshold, mixed with generic random pairs.
pub fn boundary_heavy_field(rng: &mut SceneRng, n: usize) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let thresholds: [f64; 3] = [0.05, 0.1, 0.3];
    let mut pred = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, g) = match rng.below(6) {
            0 => {
                // absolute error exactly at a threshold along one axis, zero gt
                let t = thresholds[rng.below(3)];
                let mut p = [0.0; 3];
                p[rng.below(3)] = if rng.below(2) == 0 { t } else { -t };
                (p, [0.0; 3])
            }
            1 => {
                // relative error exactly at a threshold: unit gt, error t on an orthogonal axis
                let t = thresholds[rng.below(3)];
                ([1.0, t, 0.0], [1.0, 0.0, 0.0])
            }
            2 => {
                // one ulp either side of a threshold
                let t = thresholds[rng.below(3)];
                let e = if rng.below(2) == 0 {
                    t.next_up()
                } else {
                    t.next_down()
                };
                ([e, 0.0, 0.0], [0.0; 3])
            }
            3 => {
                // zero-norm gt with random error
                let p = [rng.normal() * 0.2, rng.normal() * 0.2, rng.normal() * 0.2];
                (p, [0.0; 3])
            }
            _ => {
                let g = [rng.normal(), rng.normal(), rng.normal()];
                let s = [0.01, 0.1, 0.5][rng.below(3)];
                (
                    [
                        g[0] + s * rng.normal(),
                        g[1] + s * rng.normal(),
                        g[2] + s * rng.normal(),
                    ],
                    g,
                )
            }
        };
        pred.push(p);
        gt.push(g);
    }
    (pred, gt)
}

pub fn small_cfg(dc: usize, dm: usize, k: usize) -> Gma3dConfig {
    Gma3dConfig {
        context_dim: dc,
        motion_dim: dm,
        qk_dim: 3,
        encoder_dim: 3,
        encoder_hidden: 4,
        scorer_hidden: 5,
        k,
        ..Gma3dConfig::default()
    }
}

/// Oracle composition on `N = 8` instances with every branch enabled.
pub fn eight_point_instance(seed: u64) -> Instance {
    let mut rng = SceneRng::new(seed);
    let cfg = Gma3dConfig {
        k: 3,
        global_weight_map: seed % 2 == 1,
        global_weight_hidden: 3,
        ..small_cfg(4, 3, 3)
    };
    let mut params = Gma3dParams::init(&cfg, &mut rng).unwrap();
    randomize(&mut params, &mut rng, 0.7, 1.3);
    Instance {
        points: random_points(&mut rng, 8, 1.0),
        x: random_mat(&mut rng, 8, 4, 1.0),
        y: random_mat(&mut rng, 8, 3, 1.0),
        cfg,
        params,
    }
}
