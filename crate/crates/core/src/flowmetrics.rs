//! End-point error and the threshold accuracy metrics for scene flow.
//!
//! All thresholds are strict inequalities. The relative disjunct uses
//! `EPE / ‖gt‖` and is skipped for points whose ground truth is the zero
//! vector.

use crate::error::{Error, Result};
use crate::numkern::DenseArray;
use crate::scalar::Real;

pub const STRICT_ABS: f64 = 0.05;
pub const STRICT_REL: f64 = 0.05;
pub const RELAX_ABS: f64 = 0.1;
pub const RELAX_REL: f64 = 0.1;
pub const OUTLIER_ABS: f64 = 0.3;
pub const OUTLIER_REL: f64 = 0.3;

/// Per-point 3-D displacement, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    vectors: Vec<[T; 3]>,
}

impl<T: Real> FlowField<T> {
    pub fn new(vectors: Vec<[T; 3]>) -> Result<Self> {
        if let Some(index) = vectors
            .iter()
            .position(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite {
                context: "FlowField::new".into(),
                index,
            });
        }
        Ok(Self { vectors })
    }

    pub fn from_array(a: &DenseArray<T>) -> Result<Self> {
        if a.shape().len() != 2 || a.cols() != 3 {
            return Err(Error::Shape {
                op: "FlowField::from_array",
                lhs: a.shape().to_vec(),
                rhs: vec![a.rows(), 3],
            });
        }
        Self::new(
            (0..a.rows())
                .map(|i| [a.get(i, 0), a.get(i, 1), a.get(i, 2)])
                .collect(),
        )
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            vectors: vec![[T::zero(); 3]; n],
        }
    }

    pub fn to_array(&self) -> DenseArray<T> {
        let data = self
            .vectors
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect();
        DenseArray::matrix(self.len().max(1), 3, data).expect("finite N×3")
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[[T; 3]] {
        &self.vectors
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMetrics {
    pub epe_m: f64,
    pub acc_strict: f64,
    pub acc_relax: f64,
    pub outliers: f64,
    pub n_points: usize,
}

fn norm<T: Real>(v: &[T; 3]) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn point_error<T: Real>(p: &[T; 3], g: &[T; 3]) -> T {
    norm(&[p[0] - g[0], p[1] - g[1], p[2] - g[2]])
}

fn check_len<T: Real>(pred: &FlowField<T>, gt: &FlowField<T>) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Shape {
            op: "flow metrics",
            lhs: vec![pred.len(), 3],
            rhs: vec![gt.len(), 3],
        });
    }
    Ok(())
}

/// Mean end-point error.
pub fn epe<T: Real>(pred: &FlowField<T>, gt: &FlowField<T>) -> Result<T> {
    check_len(pred, gt)?;
    if gt.is_empty() {
        return Err(Error::NoPoints);
    }
    let total = pred
        .vectors
        .iter()
        .zip(&gt.vectors)
        .fold(T::zero(), |acc, (p, g)| acc + point_error(p, g));
    Ok(total / T::from_usize_lossy(gt.len()))
}

/// All four metrics over the points where `mask` is true (all points if `None`).
pub fn evaluate<T: Real>(
    pred: &FlowField<T>,
    gt: &FlowField<T>,
    mask: Option<&[bool]>,
) -> Result<FlowMetrics> {
    check_len(pred, gt)?;
    if let Some(m) = mask {
        if m.len() != gt.len() {
            return Err(Error::Shape {
                op: "flow metrics mask",
                lhs: vec![m.len()],
                rhs: vec![gt.len()],
            });
        }
    }
    let (sa, sr) = (T::lit(STRICT_ABS), T::lit(STRICT_REL));
    let (ra, rr) = (T::lit(RELAX_ABS), T::lit(RELAX_REL));
    let (oa, or) = (T::lit(OUTLIER_ABS), T::lit(OUTLIER_REL));

    let mut n = 0usize;
    let mut epe_sum = T::zero();
    let (mut strict, mut relax, mut outliers) = (0usize, 0usize, 0usize);
    for (i, (p, g)) in pred.vectors.iter().zip(&gt.vectors).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        n += 1;
        let e = point_error(p, g);
        epe_sum += e;
        let gn = norm(g);
        let rel = if gn > T::zero() { Some(e / gn) } else { None };
        if e < sa || rel.is_some_and(|r| r < sr) {
            strict += 1;
        }
        if e < ra || rel.is_some_and(|r| r < rr) {
            relax += 1;
        }
        if e > oa || rel.is_some_and(|r| r > or) {
            outliers += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoPoints);
    }
    let nf = n as f64;
    Ok(FlowMetrics {
        epe_m: (epe_sum / T::from_usize_lossy(n)).to_f64_lossy(),
        acc_strict: strict as f64 / nf,
        acc_relax: relax as f64 / nf,
        outliers: outliers as f64 / nf,
        n_points: n,
    })
}

/// Metrics on occluded points, on non-occluded points, and on all points.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMetrics {
    pub occluded: Result<FlowMetrics>,
    pub non_occluded: Result<FlowMetrics>,
    pub all: Result<FlowMetrics>,
}

pub fn evaluate_split<T: Real>(
    pred: &FlowField<T>,
    gt: &FlowField<T>,
    occlusion_mask: &[bool],
) -> Result<SplitMetrics> {
    check_len(pred, gt)?;
    if occlusion_mask.len() != gt.len() {
        return Err(Error::Shape {
            op: "flow metrics mask",
            lhs: vec![occlusion_mask.len()],
            rhs: vec![gt.len()],
        });
    }
    let visible: Vec<bool> = occlusion_mask.iter().map(|&o| !o).collect();
    Ok(SplitMetrics {
        occluded: evaluate(pred, gt, Some(occlusion_mask)),
        non_occluded: evaluate(pred, gt, Some(&visible)),
        all: evaluate(pred, gt, None),
    })
}
