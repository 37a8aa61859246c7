//! Task space partition: the union of the per-target base supports split
//! into regions that share one parent-target signature, plus the region
//! success-probability matrix and inter-region travel distances.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::reachability::{BaseGrid, Ptrm};

/// Cells sharing one parent signature. Regions are keyed by signature only,
/// so the cells need not be geometrically connected.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    /// Vertex index in the routing graph, `1..=r`; 0 and `r + 1` are the
    /// start and goal.
    pub id: usize,
    /// Sorted grid cells.
    pub cells: Vec<usize>,
    /// Sorted PTRM rows whose support contains every cell of the region.
    pub parents: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Partition {
    grid: BaseGrid,
    n_targets: usize,
    regions: Vec<Region>,
}

impl Partition {
    pub fn grid(&self) -> &BaseGrid {
        &self.grid
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Region by routing-vertex id (`1..=r`).
    pub fn region(&self, id: usize) -> &Region {
        &self.regions[id - 1]
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    /// Region id per grid cell, 0 where no target is reachable.
    pub fn label_map(&self) -> Vec<usize> {
        let mut labels = vec![0; self.grid.len()];
        for region in &self.regions {
            for &c in &region.cells {
                labels[c] = region.id;
            }
        }
        labels
    }
}

/// Groups support cells by the set of targets that can reach them. Region
/// ids follow the lexicographic order of the signatures.
pub fn compute_partition(ptrm: &Ptrm) -> Result<Partition> {
    let grid = *ptrm.grid();
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut signature = Vec::with_capacity(ptrm.len());
    for cell in 0..grid.len() {
        signature.clear();
        signature.extend((0..ptrm.len()).filter(|&row| ptrm.in_support(row, cell)));
        if !signature.is_empty() {
            groups.entry(signature.clone()).or_default().push(cell);
        }
    }
    if groups.is_empty() {
        return Err(Error::EmptyTaskSpace);
    }
    let regions = groups
        .into_iter()
        .enumerate()
        .map(|(k, (parents, cells))| Region { id: k + 1, cells, parents })
        .collect();
    Ok(Partition {
        grid,
        n_targets: ptrm.len(),
        regions,
    })
}

/// `P[i][j]`: mean reach probability of target row `i` over the cells of
/// region `j` (column `j` holds region id `j + 1`).
pub fn probability_matrix(partition: &Partition, ptrm: &Ptrm) -> Array2<f64> {
    let mut p = Array2::zeros((ptrm.len(), partition.len()));
    for (j, region) in partition.regions().iter().enumerate() {
        for &row in &region.parents {
            let field = ptrm.prob(row);
            let sum: f64 = region.cells.iter().map(|&c| field[c]).sum();
            p[[row, j]] = sum / region.cells.len() as f64;
        }
    }
    p
}

/// Minimum Euclidean distance between cell centers of every pair of
/// regions, bordered by the start (index 0) and goal (index `r + 1`).
pub fn region_distances(partition: &Partition, start: Point2, goal: Point2) -> Array2<f64> {
    let r = partition.len();
    let grid = partition.grid();
    let cs = grid.cell_size;
    let mut dist = Array2::zeros((r + 2, r + 2));

    let rows: Vec<Vec<f64>> = partition
        .regions()
        .par_iter()
        .map(|region| {
            let mut mask = vec![false; grid.len()];
            for &c in &region.cells {
                mask[c] = true;
            }
            let edt = squared_edt(&mask, grid.nx, grid.ny);
            partition
                .regions()
                .iter()
                .map(|other| {
                    let best = other.cells.iter().map(|&c| edt[c]).fold(f64::INFINITY, f64::min);
                    best.sqrt() * cs
                })
                .collect()
        })
        .collect();

    for j in 0..r {
        for l in 0..r {
            if j != l {
                // Symmetric by construction; take the lower-index row so that
                // both triangles hold the identical float.
                let (a, b) = if j < l { (j, l) } else { (l, j) };
                dist[[j + 1, l + 1]] = rows[a][b];
            }
        }
    }
    for (j, region) in partition.regions().iter().enumerate() {
        let to = |p: Point2| {
            region
                .cells
                .iter()
                .map(|&c| grid.cell_center(c).dist(p))
                .fold(f64::INFINITY, f64::min)
        };
        let ds = to(start);
        let dg = to(goal);
        dist[[0, j + 1]] = ds;
        dist[[j + 1, 0]] = ds;
        dist[[r + 1, j + 1]] = dg;
        dist[[j + 1, r + 1]] = dg;
    }
    let sg = start.dist(goal);
    dist[[0, r + 1]] = sg;
    dist[[r + 1, 0]] = sg;
    dist
}

/// Squared Euclidean distance, in cell units, from every cell to the nearest
/// `true` cell (separable lower-envelope transform). `INFINITY` if none.
fn squared_edt(mask: &[bool], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; nx * ny];
    let n = nx.max(ny);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for iy in 0..ny {
        for ix in 0..nx {
            f[ix] = if mask[iy * nx + ix] { 0.0 } else { f64::INFINITY };
        }
        lower_envelope(&f[..nx], &mut d[..nx], &mut v, &mut z);
        out[iy * nx..(iy + 1) * nx].copy_from_slice(&d[..nx]);
    }
    for ix in 0..nx {
        for iy in 0..ny {
            f[iy] = out[iy * nx + ix];
        }
        lower_envelope(&f[..ny], &mut d[..ny], &mut v, &mut z);
        for iy in 0..ny {
            out[iy * nx + ix] = d[iy];
        }
    }
    out
}

/// One-dimensional squared distance transform of sampled function `f`.
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let mut k: isize = -1;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            if k < 0 {
                break;
            }
            let p = v[k as usize];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
            } else {
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                break;
            }
        }
        if k < 0 {
            k = 0;
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
        }
        z[k as usize + 1] = f64::INFINITY;
    }
    if k < 0 {
        d.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for x in 0..f.len() {
        while z[k + 1] < x as f64 {
            k += 1;
        }
        let dx = x as f64 - v[k] as f64;
        d[x] = dx * dx + f[v[k]];
    }
}

/// Partition, probability matrix, and distance matrix for one PTRM.
#[derive(Clone, Debug)]
pub struct PartitionSet {
    pub partition: Partition,
    pub prob: Array2<f64>,
    pub dist: Array2<f64>,
    pub start: Point2,
    pub goal: Point2,
}

impl PartitionSet {
    pub fn build(ptrm: &Ptrm, start: Point2, goal: Point2) -> Result<Self> {
        let partition = compute_partition(ptrm)?;
        let prob = probability_matrix(&partition, ptrm);
        let dist = region_distances(&partition, start, goal);
        Ok(Self {
            partition,
            prob,
            dist,
            start,
            goal,
        })
    }
}
