//! Base reachability: annulus regions, the containment condition, and the
//! probabilistic target reachability map (PTRM) over a discretized base grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Annulus, Point2, Rect};
use crate::scene::{ArmParams, BeliefState, Scene, Troi};
use crate::seed;

/// Base positions from which the arm can manipulate `mpoi`.
pub fn manipulation_region(mpoi: Point2, arm: &ArmParams) -> Annulus {
    Annulus::new(mpoi, arm.manip_r_min, arm.manip_r_max)
}

/// Base positions from which the camera can observe the whole TROI.
pub fn observation_region(troi: &Troi, arm: &ArmParams) -> Annulus {
    Annulus::new(troi.center, arm.obs_r_min, arm.obs_r_max)
}

/// True iff the manipulation annulus about every point of the TROI lies
/// inside the observation annulus about its center. The worst case is a
/// manipulation point on the TROI boundary, displaced by the full radius.
pub fn check_containment(troi: &Troi, arm: &ArmParams) -> bool {
    arm.obs_r_min + troi.radius <= arm.manip_r_min && arm.manip_r_max + troi.radius <= arm.obs_r_max
}

pub fn ensure_containment(scene: &Scene, arm: &ArmParams) -> Result<()> {
    arm.validate()?;
    match scene.targets().iter().find(|t| !check_containment(t, arm)) {
        Some(t) => Err(Error::Containment { target: t.id }),
        None => Ok(()),
    }
}

/// Monte-Carlo estimate of the probability that a base at `cell_center` can
/// manipulate the target, i.e. that the drawn manipulation point's annulus
/// contains the base. Exact 0/1 for collapsed beliefs.
pub fn reach_probability(
    cell_center: Point2,
    belief: &BeliefState,
    arm: &ArmParams,
    mc_samples: usize,
    seed: u64,
) -> f64 {
    match belief {
        BeliefState::Collapsed(p) => {
            if manipulation_region(*p, arm).contains(cell_center) {
                1.0
            } else {
                0.0
            }
        }
        BeliefState::Truncated(tn) => {
            assert!(mc_samples >= 1, "mc_samples must be at least 1");
            let mut rng = seed::rng(seed);
            let hits = (0..mc_samples)
                .filter(|_| manipulation_region(tn.sample(&mut rng), arm).contains(cell_center))
                .count();
            hits as f64 / mc_samples as f64
        }
    }
}

/// Uniform grid over the base workspace. Cells are indexed row-major,
/// `iy * nx + ix`, and represented by their centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BaseGrid {
    pub origin: Point2,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl BaseGrid {
    /// Covers `workspace` inflated by `margin` on every side.
    pub fn covering(workspace: Rect, margin: f64, cell_size: f64) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::validation("cell_size", "must be positive"));
        }
        let extent = workspace.inflate(margin);
        let nx = (extent.width() / cell_size).ceil() as usize;
        let ny = (extent.height() / cell_size).ceil() as usize;
        Ok(Self {
            origin: extent.min,
            cell_size,
            nx: nx.max(1),
            ny: ny.max(1),
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    fn center_x(&self, ix: i64) -> f64 {
        self.origin.x + (ix as f64 + 0.5) * self.cell_size
    }

    fn center_y(&self, iy: i64) -> f64 {
        self.origin.y + (iy as f64 + 0.5) * self.cell_size
    }

    pub fn cell_center(&self, cell: usize) -> Point2 {
        let (ix, iy) = self.coords(cell);
        Point2::new(self.center_x(ix as i64), self.center_y(iy as i64))
    }

    /// Cell whose square contains `p`, if inside the grid.
    pub fn cell_at(&self, p: Point2) -> Option<usize> {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some(self.index(fx as usize, fy as usize))
    }

    /// Per-row inclusive `[x0, x1]` spans of cells whose centers lie in the
    /// annulus. Span boundaries are settled with the exact membership
    /// predicate, so the result agrees with `Annulus::contains` cell by cell.
    pub fn annulus_spans(&self, a: &Annulus, mut emit: impl FnMut(usize, usize, usize)) {
        let cs = self.cell_size;
        let ro2 = a.r_outer * a.r_outer;
        let ri2 = a.r_inner * a.r_inner;
        let iy_lo = (((a.center.y - a.r_outer - self.origin.y) / cs).floor() as i64 - 1).max(0);
        let iy_hi = (((a.center.y + a.r_outer - self.origin.y) / cs).ceil() as i64 + 1).min(self.ny as i64 - 1);
        for iy in iy_lo..=iy_hi {
            let dy = self.center_y(iy) - a.center.y;
            let dy2 = dy * dy;
            if dy2 > ro2 {
                continue;
            }
            let d2 = |ix: i64| {
                let dx = self.center_x(ix) - a.center.x;
                dx * dx + dy2
            };
            let to_ix = |x: f64| (x - self.origin.x) / cs - 0.5;

            let ho = (ro2 - dy2).sqrt();
            let mut l = to_ix(a.center.x - ho).ceil() as i64;
            let mut r = to_ix(a.center.x + ho).floor() as i64;
            while l <= r && d2(l) > ro2 {
                l += 1;
            }
            while d2(l - 1) <= ro2 {
                l -= 1;
            }
            while r >= l && d2(r) > ro2 {
                r -= 1;
            }
            while d2(r + 1) <= ro2 {
                r += 1;
            }
            if l > r {
                continue;
            }

            // Cells strictly inside the inner circle form one contiguous hole.
            let mut spans = [(l, r), (1, 0)];
            if dy2 < ri2 {
                let hi = (ri2 - dy2).sqrt();
                let mut hl = to_ix(a.center.x - hi).floor() as i64 + 1;
                let mut hr = to_ix(a.center.x + hi).ceil() as i64 - 1;
                while hl <= hr && d2(hl) >= ri2 {
                    hl += 1;
                }
                while hl > l && d2(hl - 1) < ri2 {
                    hl -= 1;
                }
                while hr >= hl && d2(hr) >= ri2 {
                    hr -= 1;
                }
                while hr < r && d2(hr + 1) < ri2 {
                    hr += 1;
                }
                if hl <= hr {
                    spans = [(l, hl - 1), (hr + 1, r)];
                }
            }
            for (x0, x1) in spans {
                let x0 = x0.max(0);
                let x1 = x1.min(self.nx as i64 - 1);
                if x0 <= x1 {
                    emit(iy as usize, x0 as usize, x1 as usize);
                }
            }
        }
    }

    /// Sorted cells whose centers lie in the annulus.
    pub fn rasterize(&self, a: &Annulus) -> Vec<usize> {
        let mut cells = Vec::new();
        self.annulus_spans(a, |iy, x0, x1| {
            let base = iy * self.nx;
            cells.extend(base + x0..=base + x1);
        });
        cells
    }
}

/// Per-target reach probability fields over a shared base grid.
///
/// Rows are parallel to the targets of the scene the map was built from.
#[derive(Clone, Debug)]
pub struct Ptrm {
    grid: BaseGrid,
    arm: ArmParams,
    trois: Vec<Troi>,
    prob: Vec<Vec<f64>>,
    support: Vec<Vec<usize>>,
}

impl Ptrm {
    pub(crate) fn from_fields(grid: BaseGrid, arm: ArmParams, trois: Vec<Troi>, prob: Vec<Vec<f64>>) -> Self {
        let support = prob
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(c, _)| c).collect())
            .collect();
        Self {
            grid,
            arm,
            trois,
            prob,
            support,
        }
    }

    pub fn grid(&self) -> &BaseGrid {
        &self.grid
    }

    pub fn arm(&self) -> &ArmParams {
        &self.arm
    }

    pub fn len(&self) -> usize {
        self.trois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trois.is_empty()
    }

    pub fn troi(&self, row: usize) -> &Troi {
        &self.trois[row]
    }

    pub fn trois(&self) -> &[Troi] {
        &self.trois
    }

    pub fn prob(&self, row: usize) -> &[f64] {
        &self.prob[row]
    }

    /// Sorted cells with non-zero reach probability for `row`.
    pub fn support(&self, row: usize) -> &[usize] {
        &self.support[row]
    }

    pub fn in_support(&self, row: usize, cell: usize) -> bool {
        self.prob[row][cell] > 0.0
    }

    /// Integral of the reach probability over the grid, in m².
    pub fn mass(&self, row: usize) -> f64 {
        let cs = self.grid.cell_size;
        self.prob[row].iter().sum::<f64>() * cs * cs
    }

    /// The map restricted to `rows`, in the given order.
    pub(crate) fn subset(&self, rows: &[usize]) -> Ptrm {
        Ptrm {
            grid: self.grid,
            arm: self.arm,
            trois: rows.iter().map(|&r| self.trois[r]).collect(),
            prob: rows.iter().map(|&r| self.prob[r].clone()).collect(),
            support: rows.iter().map(|&r| self.support[r].clone()).collect(),
        }
    }

    /// Replaces `row` with the deterministic field of an observed
    /// manipulation point: 1 on its manipulation annulus, 0 elsewhere.
    pub fn collapse(&self, row: usize, observed: Point2) -> Result<Ptrm> {
        let troi = self.trois[row];
        if !troi.contains(observed) {
            return Err(Error::InconsistentObservation {
                target: troi.id,
                x: observed.x,
                y: observed.y,
            });
        }
        let mut next = self.clone();
        next.prob[row] = deterministic_field(&self.grid, manipulation_region(observed, &self.arm));
        next.support[row] = self.grid.rasterize(&manipulation_region(observed, &self.arm));
        Ok(next)
    }
}

fn deterministic_field(grid: &BaseGrid, annulus: Annulus) -> Vec<f64> {
    let mut row = vec![0.0; grid.len()];
    for c in grid.rasterize(&annulus) {
        row[c] = 1.0;
    }
    row
}

/// Estimates every target's reach field from one shared set of
/// `mc_samples` manipulation-point draws per target: each draw's annulus is
/// rasterized and the per-cell hit counts normalized.
pub fn build_ptrm(scene: &Scene, arm: &ArmParams, cell_size: f64, mc_samples: usize, seed: u64) -> Result<Ptrm> {
    ensure_containment(scene, arm)?;
    if mc_samples == 0 {
        return Err(Error::validation("mc_samples", "must be at least 1"));
    }
    let grid = BaseGrid::covering(scene.workspace(), arm.manip_r_max, cell_size)?;
    let prob = scene
        .targets()
        .par_iter()
        .zip(scene.beliefs().par_iter())
        .map(|(troi, belief)| match belief {
            BeliefState::Collapsed(p) => deterministic_field(&grid, manipulation_region(*p, arm)),
            BeliefState::Truncated(tn) => {
                let mut rng = seed::rng(seed::derive(seed, &[troi.id as u64]));
                let stride = grid.nx + 1;
                let mut diff = vec![0i32; stride * grid.ny];
                for _ in 0..mc_samples {
                    let annulus = manipulation_region(tn.sample(&mut rng), arm);
                    grid.annulus_spans(&annulus, |iy, x0, x1| {
                        diff[iy * stride + x0] += 1;
                        diff[iy * stride + x1 + 1] -= 1;
                    });
                }
                let mut row = vec![0.0; grid.len()];
                for iy in 0..grid.ny {
                    let mut acc = 0i32;
                    for ix in 0..grid.nx {
                        acc += diff[iy * stride + ix];
                        row[grid.index(ix, iy)] = acc as f64 / mc_samples as f64;
                    }
                }
                row
            }
        })
        .collect();
    Ok(Ptrm::from_fields(grid, *arm, scene.targets().to_vec(), prob))
}
