use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::cloud::{dist2, PointCloud};

/// Greedy farthest point sampling from `seed_index`. Each pick maximizes the
/// distance to the already-selected set; ties go to the lower index.
pub fn fps<T: Real>(cloud: &PointCloud<T>, m: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if m == 0 || m > n {
        return Err(Error::Parameter(format!("cannot sample {m} of {n} points")));
    }
    if seed_index >= n {
        return Err(Error::Parameter(format!(
            "seed index {seed_index} out of range for {n} points"
        )));
    }
    let pts = cloud.points();
    let mut selected = vec![false; n];
    let mut min_d: Vec<T> = pts.iter().map(|p| dist2(p, &pts[seed_index])).collect();
    let mut out = Vec::with_capacity(m);
    out.push(seed_index);
    selected[seed_index] = true;
    while out.len() < m {
        let mut pick = usize::MAX;
        let mut pick_d = T::neg_infinity();
        for i in 0..n {
            if !selected[i] && min_d[i] > pick_d {
                pick = i;
                pick_d = min_d[i];
            }
        }
        selected[pick] = true;
        out.push(pick);
        for i in 0..n {
            let d = dist2(&pts[i], &pts[pick]);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    Ok(out)
}

/// Smallest pairwise distance among the selected points (∞ for one point).
pub fn min_pairwise_distance<T: Real>(cloud: &PointCloud<T>, indices: &[usize]) -> T {
    let mut best = T::infinity();
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            best = best.min(dist2(&cloud.point(i), &cloud.point(j)).sqrt());
        }
    }
    best
}
