//! Exact k-nearest-neighbor search.
//!
//! Candidates are ordered by `(squared distance, index)`, which makes the
//! result unique even with ties and lets the kd-tree reproduce the O(N²) scan
//! exactly.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::cloud::{dist2, PointCloud};

const LEAF_SIZE: usize = 8;

/// `k` neighbors per point, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    k: usize,
    indices: Vec<usize>,
}

impl NeighborIndex {
    pub fn new(k: usize, indices: Vec<usize>) -> Result<Self> {
        if k == 0 || !indices.len().is_multiple_of(k) {
            return Err(Error::Parameter(format!(
                "{} neighbor indices do not form rows of k = {k}",
                indices.len()
            )));
        }
        Ok(Self { k, indices })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    /// Row-major `N·k` indices.
    pub fn flat(&self) -> &[usize] {
        &self.indices
    }
}

#[derive(Debug)]
enum KdNode<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: Box<KdNode<T>>,
        right: Box<KdNode<T>>,
    },
}

/// Static kd-tree over a borrowed cloud.
#[derive(Debug)]
pub struct KdTree<'a, T> {
    cloud: &'a PointCloud<T>,
    order: Vec<usize>,
    root: KdNode<T>,
}

impl<'a, T: Real> KdTree<'a, T> {
    pub fn build(cloud: &'a PointCloud<T>) -> Self {
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        let n = order.len();
        let root = build_node(cloud.points(), &mut order, 0, n);
        Self { cloud, order, root }
    }

    /// The `k` nearest cloud points to `query`, skipping index `exclude`.
    /// Returns fewer than `k` only if the cloud is too small.
    pub fn nearest(&self, query: &[T; 3], k: usize, exclude: Option<usize>) -> Vec<(T, usize)> {
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.root, query, k, exclude, &mut best);
        }
        best
    }

    fn search(
        &self,
        node: &KdNode<T>,
        q: &[T; 3],
        k: usize,
        exclude: Option<usize>,
        best: &mut Vec<(T, usize)>,
    ) {
        match node {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) != exclude {
                        offer(best, k, (dist2(q, &self.cloud.points()[i]), i));
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - *value;
                let (near, far) = if diff < T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, exclude, best);
                let bound = diff * diff;
                if best.len() < k || bound <= best[best.len() - 1].0 {
                    self.search(far, q, k, exclude, best);
                }
            }
        }
    }
}

fn build_node<T: Real>(pts: &[[T; 3]], order: &mut [usize], start: usize, end: usize) -> KdNode<T> {
    if end - start <= LEAF_SIZE {
        return KdNode::Leaf { start, end };
    }
    let slice = &mut order[start..end];
    let axis = (0..3)
        .map(|a| {
            let (lo, hi) = slice
                .iter()
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
                    (lo.min(pts[i][a]), hi.max(pts[i][a]))
                });
            (a, hi - lo)
        })
        .fold(
            (0, T::neg_infinity()),
            |acc, (a, s)| if s > acc.1 { (a, s) } else { acc },
        )
        .0;
    slice.sort_by(|&i, &j| {
        pts[i][axis]
            .partial_cmp(&pts[j][axis])
            .expect("finite coordinates")
            .then(i.cmp(&j))
    });
    let mid = start + (end - start) / 2;
    // left holds coordinates <= value, right holds coordinates >= value
    let value = pts[order[mid]][axis];
    let left = Box::new(build_node(pts, order, start, mid));
    let right = Box::new(build_node(pts, order, mid, end));
    KdNode::Split {
        axis,
        value,
        left,
        right,
    }
}

fn offer<T: Real>(best: &mut Vec<(T, usize)>, k: usize, cand: (T, usize)) {
    let less = |a: &(T, usize), b: &(T, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    if best.len() == k && !less(&cand, &best[k - 1]) {
        return;
    }
    let pos = best
        .iter()
        .position(|b| less(&cand, b))
        .unwrap_or(best.len());
    best.insert(pos, cand);
    best.truncate(k);
}

fn check_k(n: usize, k: usize, include_self: bool) -> Result<()> {
    let max = if include_self { n } else { n.saturating_sub(1) };
    if k == 0 || k > max {
        return Err(Error::Parameter(format!(
            "k = {k} is out of range for {n} points (max {max})"
        )));
    }
    Ok(())
}

/// Exact k-NN of every point within its own cloud, self excluded.
pub fn knn<T: Real>(cloud: &PointCloud<T>, k: usize) -> Result<NeighborIndex> {
    knn_with(cloud, k, false)
}

/// As [`knn`], optionally counting each point as its own candidate.
pub fn knn_with<T: Real>(
    cloud: &PointCloud<T>,
    k: usize,
    include_self: bool,
) -> Result<NeighborIndex> {
    check_k(cloud.len(), k, include_self)?;
    let tree = KdTree::build(cloud);
    let mut indices = Vec::with_capacity(cloud.len() * k);
    for (i, p) in cloud.points().iter().enumerate() {
        let exclude = if include_self { None } else { Some(i) };
        indices.extend(tree.nearest(p, k, exclude).into_iter().map(|(_, j)| j));
    }
    NeighborIndex::new(k, indices)
}

/// O(N²) reference scan with the same ordering rule.
pub fn knn_brute_force<T: Real>(
    cloud: &PointCloud<T>,
    k: usize,
    include_self: bool,
) -> Result<NeighborIndex> {
    check_k(cloud.len(), k, include_self)?;
    let pts = cloud.points();
    let mut indices = Vec::with_capacity(pts.len() * k);
    for i in 0..pts.len() {
        let mut cands: Vec<(T, usize)> = (0..pts.len())
            .filter(|&j| include_self || j != i)
            .map(|j| (dist2(&pts[i], &pts[j]), j))
            .collect();
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
        indices.extend(cands.iter().take(k).map(|c| c.1));
    }
    NeighborIndex::new(k, indices)
}
