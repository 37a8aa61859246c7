use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::partition::PartitionSet;
use crate::reachability::{BaseGrid, Ptrm};

/// Which cells of a region are eligible as the base pose.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseRule {
    /// Every cell of the region.
    ShortestPath,
    /// Cells whose probability for every parent target is at least the
    /// region mean, so the stop does no worse than the value the selection
    /// was priced at.
    #[default]
    RegionMean,
    /// Cells maximizing the smallest probability over the parent targets.
    MaxMin,
}

/// Cells of region `id` admitted by `rule`, in ascending cell order.
pub(super) fn candidate_cells(set: &PartitionSet, ptrm: &Ptrm, id: usize, rule: PoseRule) -> Vec<usize> {
    let region = set.partition.region(id);
    if rule == PoseRule::ShortestPath {
        return region.cells.clone();
    }
    let eps = 1e-12;
    if rule == PoseRule::MaxMin {
        let worst = |cell: usize| {
            region
                .parents
                .iter()
                .map(|&row| ptrm.prob(row)[cell])
                .fold(f64::INFINITY, f64::min)
        };
        let best = region.cells.iter().map(|&c| worst(c)).fold(f64::NEG_INFINITY, f64::max);
        return region.cells.iter().copied().filter(|&c| worst(c) >= best - eps).collect();
    }
    let margin = |cell: usize| {
        region
            .parents
            .iter()
            .map(|&row| ptrm.prob(row)[cell] - set.prob[[row, id - 1]])
            .fold(f64::INFINITY, f64::min)
    };
    // Region means are averages of the same cell values, so a few ulps of
    // slack keeps a uniform region fully eligible.
    let kept: Vec<usize> = region.cells.iter().copied().filter(|&c| margin(c) >= -eps).collect();
    if !kept.is_empty() {
        return kept;
    }
    let best = region.cells.iter().map(|&c| margin(c)).fold(f64::NEG_INFINITY, f64::max);
    region.cells.iter().copied().filter(|&c| margin(c) >= best - eps).collect()
}

/// Greedy farthest-point subsample of at most `cap` cells, seeded with the
/// lowest cell index. Returned in ascending cell order.
pub fn farthest_point_sample(grid: &BaseGrid, cells: &[usize], cap: usize) -> Vec<usize> {
    if cells.len() <= cap {
        return cells.to_vec();
    }
    if cap == 0 {
        return Vec::new();
    }
    let pts: Vec<Point2> = cells.iter().map(|&c| grid.cell_center(c)).collect();
    let mut nearest = vec![f64::INFINITY; cells.len()];
    let mut picked = Vec::with_capacity(cap);
    let mut next = 0;
    for _ in 0..cap {
        picked.push(cells[next]);
        let q = pts[next];
        let mut far = 0;
        for (k, p) in pts.iter().enumerate() {
            nearest[k] = nearest[k].min(p.dist_sq(q));
            if nearest[k] > nearest[far] {
                far = k;
            }
        }
        next = far;
    }
    picked.sort_unstable();
    picked
}

/// Shortest start-to-goal polyline choosing one point from each layer in
/// order. Returns the chosen index per layer and the polyline length; ties
/// keep the lowest index.
pub fn best_poses(start: Point2, goal: Point2, layers: &[Vec<Point2>]) -> (Vec<usize>, f64) {
    if layers.is_empty() {
        return (Vec::new(), start.dist(goal));
    }
    let mut cost: Vec<f64> = layers[0].iter().map(|p| start.dist(*p)).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(layers.len());
    back.push(vec![0; layers[0].len()]);
    for w in layers.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let mut next_cost = Vec::with_capacity(cur.len());
        let mut arg = Vec::with_capacity(cur.len());
        for q in cur {
            let mut best = (0, f64::INFINITY);
            for (k, p) in prev.iter().enumerate() {
                let c = cost[k] + p.dist(*q);
                if c < best.1 {
                    best = (k, c);
                }
            }
            next_cost.push(best.1);
            arg.push(best.0);
        }
        cost = next_cost;
        back.push(arg);
    }
    let last = layers.last().unwrap();
    let mut end = (0, f64::INFINITY);
    for (k, p) in last.iter().enumerate() {
        let c = cost[k] + p.dist(goal);
        if c < end.1 {
            end = (k, c);
        }
    }
    let mut choice = vec![0; layers.len()];
    let mut k = end.0;
    for layer in (0..layers.len()).rev() {
        choice[layer] = k;
        k = back[layer][k];
    }
    (choice, end.1)
}
