use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::rng::SceneRng;
use crate::spatial::NeighborIndex;

/// Greedy random marking in shuffled order; a point is occluded only if it
/// and every already-occluded point listing it as a neighbor keep at least
/// one visible neighbor.
/// Points already set in `mask` stay occluded and count toward `target`.
pub(crate) fn select_local(
    target: usize,
    nbrs: &NeighborIndex,
    mut mask: Vec<bool>,
    rng: &mut SceneRng,
) -> Result<Vec<bool>> {
    let n = nbrs.len();
    let rev = reverse(nbrs);
    let mut visible: Vec<usize> = (0..n)
        .map(|i| nbrs.row(i).iter().filter(|&&j| !mask[j]).count())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut count = mask.iter().filter(|&&o| o).count();
    for &i in &order {
        if count == target {
            break;
        }
        if mask[i] || visible[i] == 0 || rev[i].iter().any(|&j| mask[j] && visible[j] < 2) {
            continue;
        }
        mask[i] = true;
        count += 1;
        rev[i].iter().for_each(|&j| visible[j] -= 1);
    }
    if count < target {
        return Err(Error::Generation(format!(
            "local occlusion placed {count} of {target} points while keeping a visible \
             neighbor for each; lower scene.occlusion_fraction"
        )));
    }
    Ok(mask)
}

/// Greedy union of kNN-closed regions: starting from random visible seeds,
/// each region is everything reachable along neighbor edges. Regions that
/// would overshoot the target are skipped. Fails when under half the target
/// can be reached.
pub(crate) fn select_global(
    target: usize,
    nbrs: &NeighborIndex,
    rng: &mut SceneRng,
) -> Result<Vec<bool>> {
    let n = nbrs.len();
    let mut mask = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut count = 0;
    for &seed in &order {
        if count == target {
            break;
        }
        if mask[seed] {
            continue;
        }
        let region = reachable(nbrs, seed, &mask);
        if count + region.len() <= target {
            count += region.len();
            region.into_iter().for_each(|i| mask[i] = true);
        }
    }
    if count == 0 || 2 * count < target {
        return Err(Error::Generation(format!(
            "global occlusion reached {count} of {target} points; neighbor-closed regions \
             are too large (raise scene.parts_per_cluster or lower scene.occlusion_fraction)"
        )));
    }
    Ok(mask)
}

fn reverse(nbrs: &NeighborIndex) -> Vec<Vec<usize>> {
    let mut rev = vec![Vec::new(); nbrs.len()];
    for i in 0..nbrs.len() {
        for &j in nbrs.row(i) {
            rev[j].push(i);
        }
    }
    rev
}

fn reachable(nbrs: &NeighborIndex, seed: usize, already: &[bool]) -> Vec<usize> {
    let mut seen = vec![false; nbrs.len()];
    let mut queue = VecDeque::from([seed]);
    seen[seed] = true;
    let mut out = Vec::new();
    while let Some(i) = queue.pop_front() {
        out.push(i);
        for &j in nbrs.row(i) {
            if !seen[j] && !already[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    out
}
