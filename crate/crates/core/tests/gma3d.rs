#![allow(clippy::needless_range_loop)]

mod common;

use common::{
    brute_knn, eight_point_instance, equivariance_gap, from_mat, max_diff, random_mat,
    random_permutation, random_points, randomize, row_stats, small_cfg, softmax, to_mat, Instance,
    Mat,
};
use gma3d_core::gma3d::{
    aggregate_global, aggregate_local, forward, forward_with_frames, global_attention_weights,
    offset_aggregate, project_qkv, Aggregator, FeatureSet, Gma3dConfig, Gma3dParams, LocalGeometry,
    NeighborFrame,
};
use gma3d_core::numkern::{DenseArray, Linear, MlpParams};
use gma3d_core::rng::SceneRng;
use gma3d_core::spatial::{knn, NeighborIndex, PointCloud};
use proptest::prelude::*;

fn random_params(cfg: &Gma3dConfig, seed: u64, alpha: f64) -> Gma3dParams<f64> {
    let mut rng = SceneRng::new(seed);
    let mut p = Gma3dParams::init(cfg, &mut rng).unwrap();
    randomize(&mut p, &mut rng, 0.7, alpha);
    p
}

#[test]
fn project_qkv_examples() {
    let mut rng = SceneRng::new(1);
    let cfg = Gma3dConfig {
        qk_dim: 4,
        ..small_cfg(4, 3, 2)
    };
    let x = random_mat(&mut rng, 5, 4, 1.0);
    let y = random_mat(&mut rng, 5, 3, 1.0);
    let feats = FeatureSet::new(from_mat(&x), from_mat(&y)).unwrap();

    let mut p = random_params(&cfg, 2, 0.0);
    p.qk_proj = DenseArray::identity(4);
    p.value_proj = DenseArray::identity(3);
    let (q, k, v) = project_qkv(&p, &feats).unwrap();
    assert_eq!(&q, feats.context());
    assert_eq!(&k, feats.context());
    assert_eq!(&v, feats.motion());

    p.qk_proj = DenseArray::zeros(4, 4);
    p.value_proj = DenseArray::zeros(3, 3);
    let (q, _, v) = project_qkv(&p, &feats).unwrap();
    assert_eq!(q.max_abs(), 0.0);
    assert_eq!(v.max_abs(), 0.0);

    let p = random_params(&cfg, 3, 0.0);
    let (q, k, v) = project_qkv(&p, &feats).unwrap();
    let wq = to_mat(&p.qk_proj);
    let wv = to_mat(&p.value_proj);
    let want_q: Mat = x
        .iter()
        .map(|xi| {
            (0..4)
                .map(|d| (0..4).map(|c| xi[c] * wq[c][d]).sum())
                .collect()
        })
        .collect();
    let want_v: Mat = y
        .iter()
        .map(|yi| {
            (0..3)
                .map(|d| (0..3).map(|c| yi[c] * wv[c][d]).sum())
                .collect()
        })
        .collect();
    assert!(max_diff(&want_q, &q) < 1e-12);
    assert_eq!(q, k);
    assert!(max_diff(&want_v, &v) < 1e-12);
}

#[test]
fn global_weight_examples() {
    let cfg = small_cfg(3, 2, 1);
    let q = DenseArray::<f64>::from_rows(&[[0.3, -1.0, 2.0], [0.3, -1.0, 2.0]]).unwrap();
    let w = global_attention_weights(&q, &q, &cfg, None).unwrap();
    for v in w.data() {
        assert!((v - 0.5).abs() < 1e-15);
    }

    // orthogonal rows scaled by 50: diagonal logit 2500/sqrt(4), zero elsewhere
    let d = 4;
    let mut q = DenseArray::zeros(d, d);
    for i in 0..d {
        q.set(i, i, 50.0);
    }
    let cfg = Gma3dConfig { qk_dim: d, ..cfg };
    let w = global_attention_weights(&q, &q, &cfg, None).unwrap();
    let mut logits = vec![0.0; d];
    logits[0] = 2500.0 / (d as f64).sqrt();
    let want = softmax(&logits);
    for i in 0..d {
        for j in 0..d {
            let expect = if i == j { want[0] } else { want[1] };
            assert!((w.get(i, j) - expect).abs() < 1e-15);
        }
        assert!(w.get(i, i) > 1.0 - 1e-12);
    }
}

#[test]
fn global_weight_map_keeps_rows_stochastic() {
    let mut rng = SceneRng::new(4);
    let cfg = Gma3dConfig {
        global_weight_map: true,
        ..small_cfg(3, 2, 1)
    };
    let q = from_mat(&random_mat(&mut rng, 7, 3, 1.5));
    let mut map: MlpParams<f64> = MlpParams::init(&cfg.global_map_dims(), &mut rng);
    for l in &mut map.layers {
        for v in l.bias.data_mut() {
            *v = rng.normal();
        }
    }
    let w = global_attention_weights(&q, &q, &cfg, Some(&map)).unwrap();
    let (dev, min) = row_stats(&w);
    assert!(dev < 1e-12 && min >= 0.0);
}

#[test]
fn aggregate_global_examples() {
    let mut rng = SceneRng::new(5);
    let v = random_mat(&mut rng, 4, 3, 1.0);
    let va = from_mat(&v);
    let uniform = DenseArray::filled(4, 4, 0.25);
    let g = aggregate_global(&uniform, &va).unwrap();
    for r in 0..4 {
        for c in 0..3 {
            let mean = (0..4).map(|j| v[j][c]).sum::<f64>() / 4.0;
            assert!((g.get(r, c) - mean).abs() < 1e-15);
        }
    }
    assert_eq!(aggregate_global(&DenseArray::identity(4), &va).unwrap(), va);

    let raw = random_mat(&mut rng, 4, 4, 1.0);
    let w: Mat = raw.iter().map(|r| softmax(r)).collect();
    let want: Mat = (0..4)
        .map(|i| {
            (0..3)
                .map(|c| (0..4).map(|j| w[i][j] * v[j][c]).sum())
                .collect()
        })
        .collect();
    assert!(max_diff(&want, &aggregate_global(&from_mat(&w), &va).unwrap()) < 1e-12);
    assert!(aggregate_global(&DenseArray::zeros(4, 3), &va).is_err());
}

fn local_setup(
    n: usize,
    k: usize,
    seed: u64,
) -> (Gma3dParams<f64>, Vec<[f64; 3]>, Mat, Mat, Gma3dConfig) {
    let cfg = small_cfg(3, 2, k);
    let p = random_params(&cfg, seed, 0.0);
    let mut rng = SceneRng::new(seed + 100);
    let pts = random_points(&mut rng, n, 1.0);
    let x = random_mat(&mut rng, n, 3, 1.0);
    let y = random_mat(&mut rng, n, 2, 1.0);
    (p, pts, x, y, cfg)
}

#[test]
fn aggregate_local_examples() {
    let (mut p, pts, x, y, cfg) = local_setup(6, 2, 7);
    let cloud = PointCloud::new(pts.clone()).unwrap();
    let feats = FeatureSet::new(from_mat(&x), from_mat(&y)).unwrap();
    let nbrs = knn(&cloud, 2).unwrap();
    let (_, _, v) = project_qkv(&p, &feats).unwrap();

    // random instance against the per-point oracle
    let oracle = common::forward(&p, &pts, None, &x, &y, &brute_knn(&pts, 2, false), &cfg);
    let (g, w) = aggregate_local(&p, &cloud, &feats, &v, &nbrs).unwrap();
    assert!(max_diff(oracle.g_local.as_ref().unwrap(), &g) < 1e-12);
    assert!(max_diff(oracle.local_w.as_ref().unwrap(), &w) < 1e-12);

    // constant scorer: uniform weights, neighbor mean
    let last = p.local_scorer.layers.len() - 1;
    let out = p.local_scorer.layers[last].weight.shape().to_vec();
    p.local_scorer.layers[last].weight = DenseArray::zeros(out[0], out[1]);
    let (g, w) = aggregate_local(&p, &cloud, &feats, &v, &nbrs).unwrap();
    for i in 0..6 {
        assert!(w.row(i).iter().all(|&a| (a - 0.5).abs() < 1e-15));
        for c in 0..2 {
            let mean = nbrs.row(i).iter().map(|&j| v.get(j, c)).sum::<f64>() / 2.0;
            assert!((g.get(i, c) - mean).abs() < 1e-15);
        }
    }

    // k = 1 copies the single neighbor's value
    let nbrs1 = knn(&cloud, 1).unwrap();
    let (g, w) = aggregate_local(&p, &cloud, &feats, &v, &nbrs1).unwrap();
    for i in 0..6 {
        assert_eq!(w.get(i, 0), 1.0);
        assert_eq!(g.row(i), v.row(nbrs1.row(i)[0]));
    }

    let short = NeighborIndex::new(2, vec![1, 2, 0, 2]).unwrap();
    assert!(aggregate_local(&p, &cloud, &feats, &v, &short).is_err());
}

#[test]
fn offset_aggregate_examples() {
    let mut rng = SceneRng::new(9);
    let cfg = small_cfg(3, 4, 2);
    let y = from_mat(&random_mat(&mut rng, 6, 4, 1.0));
    let gl = from_mat(&random_mat(&mut rng, 6, 4, 1.0));
    let gg = from_mat(&random_mat(&mut rng, 6, 4, 1.0));

    let p0 = random_params(&cfg, 10, 0.0);
    assert_eq!(offset_aggregate(&p0, &y, &gl, &gg).unwrap(), y);

    // y equal to the aggregate with zero shift: zero input, zero offset
    let mut p = random_params(&cfg, 10, 1.0);
    p.offset_head.shift = DenseArray::zeros(1, 4);
    p.offset_head.linear.bias = DenseArray::zeros(1, 4);
    let half = gl.scale(0.5);
    let sum = half.add(&half).unwrap();
    assert_eq!(offset_aggregate(&p, &sum, &half, &half).unwrap(), sum);

    // random case with alpha = 1 against the oracle head
    let p = random_params(&cfg, 11, 1.0);
    let out = offset_aggregate(&p, &y, &gl, &gg).unwrap();
    let z: Mat = (0..6)
        .map(|i| {
            (0..4)
                .map(|c| y.get(i, c) - (gl.get(i, c) + gg.get(i, c)))
                .collect()
        })
        .collect();
    let h = common::norm_act(&p.offset_head, &z);
    let want: Mat = (0..6)
        .map(|i| (0..4).map(|c| y.get(i, c) + h[i][c]).collect())
        .collect();
    assert!(max_diff(&want, &out) < 1e-10);

    let one = DenseArray::zeros(1, 4);
    assert!(offset_aggregate(&p, &one, &one, &one).is_err());
}

#[test]
fn forward_matches_oracle_on_fifty_instances() {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let inst = eight_point_instance(1000 + seed);
        let got = inst.run();
        let want = inst.oracle();
        worst = worst.max(max_diff(&want.y_tilde, &got.y_tilde));
        worst = worst.max(max_diff(
            want.global_w.as_ref().unwrap(),
            got.attn.global_weights.as_ref().unwrap(),
        ));
        worst = worst.max(max_diff(
            want.local_w.as_ref().unwrap(),
            got.attn.local_weights.as_ref().unwrap(),
        ));
        worst = worst.max(max_diff(
            want.g_local.as_ref().unwrap(),
            got.g_local.as_ref().unwrap(),
        ));
        worst = worst.max(max_diff(
            want.g_global.as_ref().unwrap(),
            got.g_global.as_ref().unwrap(),
        ));
    }
    assert!(worst < 1e-10, "worst deviation {worst:e}");
}

#[test]
fn forward_matches_oracle_across_variants() {
    for seed in 0..60 {
        let inst = Instance::random(seed, 2, 24);
        let got = inst.run();
        let want = inst.oracle();
        let d = max_diff(&want.y_tilde, &got.y_tilde);
        assert!(d < 1e-10, "seed {seed} ({:?}): {d:e}", inst.cfg);
    }
}

#[test]
fn golden_eight_point_vector() {
    let inst = eight_point_instance(2024);
    let want = inst.oracle();
    let got = inst.run();
    assert!(max_diff(&want.y_tilde, &got.y_tilde) < 1e-12);
    for (c, g) in GOLDEN_ROW0.iter().enumerate() {
        assert!(
            (want.y_tilde[0][c] - g).abs() < 1e-12,
            "oracle col {c}: {:.17}",
            want.y_tilde[0][c]
        );
        assert!((got.y_tilde.get(0, c) - g).abs() < 1e-12);
    }
    let total: f64 = want.y_tilde.iter().flatten().sum();
    assert!((total - GOLDEN_SUM).abs() < 1e-12, "sum {total:.17}");
}

// recorded from the loop oracle
const GOLDEN_ROW0: [f64; 3] = [
    -0.920_109_845_401_252_2,
    -0.236_391_340_544_919_6,
    -1.274_265_249_375_828,
];
const GOLDEN_SUM: f64 = -7.940_214_330_555_946;

#[test]
fn plain_aggregator_and_disabled_branches() {
    let mut inst = eight_point_instance(77);
    inst.cfg.aggregator = Aggregator::PlainMlp;
    inst.cfg.plain_hidden = 4;
    let mut rng = SceneRng::new(78);
    let mut params = Gma3dParams::init(&inst.cfg, &mut rng).unwrap();
    randomize(&mut params, &mut rng, 0.5, 0.0);
    inst.params = params;
    assert!(max_diff(&inst.oracle().y_tilde, &inst.run().y_tilde) < 1e-10);

    inst.cfg.use_local = false;
    inst.cfg.use_global = false;
    let out = inst.run();
    assert!(out.attn.global_weights.is_none() && out.attn.local_weights.is_none());
    assert!(max_diff(&inst.oracle().y_tilde, &out.y_tilde) < 1e-10);
}

#[test]
fn cross_frame_displacements_use_matched_second_frame_points() {
    let mut inst = eight_point_instance(31);
    inst.cfg.neighbor_frame = NeighborFrame::Cross;
    let shift = [0.01, -0.02, 0.005];
    // second frame: shifted copy in reverse order
    let frame2: Vec<[f64; 3]> = inst
        .points
        .iter()
        .rev()
        .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
        .collect();
    let anchors: Vec<[f64; 3]> = inst
        .points
        .iter()
        .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
        .collect();
    let cloud = inst.cloud();
    let f2 = PointCloud::new(frame2).unwrap();
    let nbrs = inst.nbrs();

    let geom = LocalGeometry::cross_frame(&cloud, &f2, &nbrs).unwrap();
    let first = LocalGeometry::first_frame(&cloud, &nbrs).unwrap();
    let diff = geom.displacements().sub(first.displacements()).unwrap();
    for r in 0..diff.rows() {
        for c in 0..3 {
            assert!((diff.get(r, c) - shift[c]).abs() < 1e-15);
        }
    }

    let got = forward_with_frames(
        &inst.params,
        &cloud,
        Some(&f2),
        &inst.feats(),
        &nbrs,
        &inst.cfg,
    )
    .unwrap();
    let bnbrs = brute_knn(&inst.points, inst.cfg.k, false);
    let want = common::forward(
        &inst.params,
        &inst.points,
        Some(&anchors),
        &inst.x,
        &inst.y,
        &bnbrs,
        &inst.cfg,
    );
    assert!(max_diff(&want.y_tilde, &got.y_tilde) < 1e-10);
    assert!(forward(&inst.params, &cloud, &inst.feats(), &nbrs, &inst.cfg).is_err());
}

#[test]
fn shape_mismatches_are_rejected() {
    let inst = eight_point_instance(5);
    let wrong = Gma3dConfig {
        context_dim: 5,
        ..inst.cfg.clone()
    };
    assert!(forward(
        &inst.params,
        &inst.cloud(),
        &inst.feats(),
        &inst.nbrs(),
        &wrong
    )
    .is_err());
    let short = PointCloud::new(inst.points[..7].to_vec()).unwrap();
    assert!(forward(&inst.params, &short, &inst.feats(), &inst.nbrs(), &inst.cfg).is_err());
}

#[test]
fn motion_transfer_to_a_zeroed_point() {
    // cluster A: points 0..4, cluster B: points 4..8, one-hot context
    let mut rng = SceneRng::new(3);
    let cfg = Gma3dConfig {
        qk_dim: 2,
        ..small_cfg(2, 3, 3)
    };
    let mut p = Gma3dParams::init(&cfg, &mut rng).unwrap();
    p.qk_proj = DenseArray::identity(2).scale(50.0);
    p.value_proj = DenseArray::identity(3);
    // scorer favors neighbors carrying cluster A's context
    let sd = cfg.scorer_dims();
    let mut w = DenseArray::zeros(sd[0], sd[1]);
    for h in 0..sd[1] {
        w.set(cfg.encoder_dim, h, 5.0);
    }
    p.local_scorer.layers[0] = Linear::new(w, DenseArray::zeros(1, sd[1])).unwrap();

    let mut x = vec![vec![1.0, 0.0]; 4];
    x.extend(vec![vec![0.0, 1.0]; 4]);
    let motion_a = [0.4, -0.2, 0.9];
    let motion_b = [-1.0, 0.5, 0.0];
    let mut y: Mat = (0..8)
        .map(|i| {
            if i < 4 {
                motion_a.to_vec()
            } else {
                motion_b.to_vec()
            }
        })
        .collect();
    y[2] = vec![0.0; 3];
    let mut pts = random_points(&mut rng, 4, 0.5);
    pts.extend(
        random_points(&mut rng, 4, 0.5)
            .iter()
            .map(|q| [q[0] + 10.0, q[1], q[2]]),
    );
    let cloud = PointCloud::new(pts).unwrap();
    let feats = FeatureSet::new(from_mat(&x), from_mat(&y)).unwrap();
    let out = forward(&p, &cloud, &feats, &knn(&cloud, 3).unwrap(), &cfg).unwrap();

    let g = out.g_global.unwrap();
    for c in 0..3 {
        let mean_a = (0..4).map(|i| y[i][c]).sum::<f64>() / 4.0;
        assert!((g.get(2, c) - mean_a).abs() < 1e-9);
    }
    // local neighbors of point 2 are the other three A points, all carrying motion_a
    let gl = out.g_local.unwrap();
    for c in 0..3 {
        assert!((gl.get(2, c) - motion_a[c]).abs() < 1e-12);
    }
}

#[test]
fn alpha_zero_is_identity_for_any_parameters() {
    for seed in 0..100 {
        let mut inst = Instance::random(seed + 5000, 2, 40);
        if inst.cfg.aggregator == Aggregator::PlainMlp {
            inst.cfg.aggregator = Aggregator::Offset;
            inst.params.plain_aggregator = None;
        }
        inst.params.set_alpha(0.0);
        let out = inst.run();
        assert_eq!(out.y_tilde, from_mat(&inst.y), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn attention_rows_are_stochastic_and_forward_is_equivariant(seed in any::<u64>()) {
        let inst = Instance::random(seed, 2, 64);
        let out = inst.run();
        for w in [&out.attn.global_weights, &out.attn.local_weights].into_iter().flatten() {
            let (dev, min) = row_stats(w);
            prop_assert!(dev < 1e-9);
            prop_assert!(min >= 0.0);
        }
        let mut rng = SceneRng::new(seed ^ 0x5eed);
        let perm = random_permutation(&mut rng, inst.n());
        let gap = equivariance_gap(&inst, &perm);
        prop_assert!(gap < 1e-10, "gap {gap:e}");
    }

    #[test]
    fn joint_rescaling_preserves_global_argmax(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = SceneRng::new(seed);
        let n = 2 + rng.below(20);
        let q = from_mat(&random_mat(&mut rng, n, 4, 1.0));
        let cfg = Gma3dConfig { qk_dim: 4, logit_scaling: rng.below(2) == 0, ..small_cfg(4, 2, 1) };
        let w1 = global_attention_weights(&q, &q, &cfg, None).unwrap();
        let qc = q.scale(c);
        let w2 = global_attention_weights(&qc, &qc, &cfg, None).unwrap();
        let argmax = |w: &DenseArray<f64>, r: usize| {
            let row = w.row(r);
            (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b })
        };
        for r in 0..n {
            prop_assert_eq!(argmax(&w1, r), argmax(&w2, r));
        }
    }
}
