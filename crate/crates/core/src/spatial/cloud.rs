use crate::error::{Error, Result};
use crate::numkern::DenseArray;
use crate::scalar::Real;

/// One frame of 3-D points, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    points: Vec<[T; 3]>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<[T; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter(
                "point cloud needs at least one point".into(),
            ));
        }
        if let Some(index) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite {
                context: "PointCloud::new".into(),
                index,
            });
        }
        Ok(Self { points })
    }

    pub fn from_array(a: &DenseArray<T>) -> Result<Self> {
        if a.shape().len() != 2 || a.cols() != 3 {
            return Err(Error::Shape {
                op: "PointCloud::from_array",
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

    pub fn to_array(&self) -> DenseArray<T> {
        let data = self.points.iter().flat_map(|p| p.iter().copied()).collect();
        DenseArray::matrix(self.len(), 3, data).expect("finite N×3")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [T; 3] {
        self.points[i]
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.points[i]).collect())
    }

    pub fn map_points(&self, f: impl Fn([T; 3]) -> [T; 3]) -> Result<Self> {
        Self::new(self.points.iter().map(|&p| f(p)).collect())
    }
}

/// Squared Euclidean distance. Every search path uses this exact expression
/// so that accelerated and brute-force results compare bit-for-bit.
#[inline]
pub fn dist2<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
