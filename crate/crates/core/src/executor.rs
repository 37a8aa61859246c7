//! Episode simulation: runs plans against sampled ground truth with
//! observe-then-manipulate semantics, replanning until every target is done.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::planner::{plan_from_ptrm, Plan, PlanOutcome, PlannerConfig};
use crate::reachability::{build_ptrm, manipulation_region, BaseGrid, Ptrm};
use crate::scene::{sample_mpoi, ArmParams, Scene};
use crate::seed;

/// Stops plus weighted travel: the energy of an executed or planned route.
pub fn energy(stops: usize, gamma: f64, path_length: f64) -> f64 {
    stops as f64 + gamma * path_length
}

pub fn energy_cost(plan: &Plan, gamma: f64) -> f64 {
    let mut at = plan.start;
    let mut length = 0.0;
    for p in plan.poses().chain(std::iter::once(plan.goal)) {
        length += at.dist(p);
        at = p;
    }
    energy(plan.kappa, gamma, length)
}

/// True manipulation points, one per scene target.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub mpois: Vec<Point2>,
}

impl GroundTruth {
    /// Draws every target's point from its initial belief.
    pub fn sample(scene: &Scene, truth_seed: u64) -> Self {
        let mpois = scene
            .targets()
            .iter()
            .zip(scene.beliefs())
            .map(|(t, b)| sample_mpoi(b, seed::derive(truth_seed, &[t.id as u64])))
            .collect();
        Self { mpois }
    }

    pub fn validate(&self, scene: &Scene) -> Result<()> {
        if self.mpois.len() != scene.len() {
            return Err(Error::validation(
                "truth",
                format!("{} points for {} targets", self.mpois.len(), scene.len()),
            ));
        }
        for (t, p) in scene.targets().iter().zip(&self.mpois) {
            if !t.contains(*p) {
                return Err(Error::InconsistentObservation {
                    target: t.id,
                    x: p.x,
                    y: p.y,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub path_length: f64,
    pub stops: usize,
    pub energy: f64,
    pub replans: usize,
    pub completed: bool,
}

/// One step of an execution trace. Targets are referenced by scene index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event {
    Stop { pose: Point2 },
    Observe { target: usize },
    Manipulate { target: usize, pose: Point2 },
    Replan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    pub trace: Vec<Event>,
}

/// Path, stop and event bookkeeping shared by both algorithms.
struct Tracker {
    gamma: f64,
    at: Point2,
    path_length: f64,
    stops: usize,
    replans: usize,
    trace: Vec<Event>,
}

impl Tracker {
    fn new(start: Point2, gamma: f64) -> Self {
        Self {
            gamma,
            at: start,
            path_length: 0.0,
            stops: 0,
            replans: 0,
            trace: Vec::new(),
        }
    }

    fn stop_at(&mut self, pose: Point2) {
        self.path_length += self.at.dist(pose);
        self.at = pose;
        self.stops += 1;
        self.trace.push(Event::Stop { pose });
    }

    fn replan(&mut self) {
        self.replans += 1;
        self.trace.push(Event::Replan);
    }

    fn finish(mut self, goal: Point2, completed: bool) -> Episode {
        if completed {
            self.path_length += self.at.dist(goal);
        }
        Episode {
            metrics: EpisodeMetrics {
                path_length: self.path_length,
                stops: self.stops,
                energy: energy(self.stops, self.gamma, self.path_length),
                replans: self.replans,
                completed,
            },
            trace: self.trace,
        }
    }
}

/// The replanning executor. The first plan depends only on the scene, so it
/// is computed once and reused for every ground-truth draw.
pub struct Rhtp<'a> {
    scene: &'a Scene,
    arm: ArmParams,
    cfg: PlannerConfig,
    initial: PlanOutcome,
}

impl<'a> Rhtp<'a> {
    pub fn new(scene: &'a Scene, arm: &ArmParams, cfg: &PlannerConfig) -> Result<Self> {
        let ptrm = build_ptrm(scene, arm, cfg.cell_size, cfg.mc_samples, cfg.seed)?;
        let initial = plan_from_ptrm(ptrm, scene.start(), scene.goal(), cfg)?;
        Ok(Self {
            scene,
            arm: *arm,
            cfg: cfg.clone(),
            initial,
        })
    }

    pub fn initial(&self) -> &PlanOutcome {
        &self.initial
    }

    pub fn run(&self, truth: &GroundTruth) -> Result<Episode> {
        self.run_with(truth, |_, _| {})
    }

    /// Like [`Rhtp::run`], handing every plan used (initial and replanned)
    /// to `on_plan` together with the scene indices of its PTRM rows.
    pub fn run_with(&self, truth: &GroundTruth, mut on_plan: impl FnMut(&PlanOutcome, &[usize])) -> Result<Episode> {
        truth.validate(self.scene)?;
        let n = self.scene.len();
        let ids: Vec<usize> = self.scene.targets().iter().map(|t| t.id).collect();
        let index_of = |id: usize| ids.iter().position(|&x| x == id).expect("plan names a scene target");
        let reaches = |pose: Point2, i: usize| manipulation_region(truth.mpois[i], &self.arm).contains(pose);

        let mut observed = vec![false; n];
        let mut done = vec![false; n];
        let mut track = Tracker::new(self.scene.start(), self.cfg.gamma);
        let mut idle_rounds = 0;
        let mut current: Option<(PlanOutcome, Vec<usize>)> = None;

        loop {
            let (outcome, rows) = match &current {
                None => (&self.initial, (0..n).collect::<Vec<_>>()),
                Some((o, r)) => (o, r.clone()),
            };
            on_plan(outcome, &rows);
            let mut manipulated = 0;
            for stop in &outcome.plan.stops {
                track.stop_at(stop.pose);
                for &id in &stop.targets {
                    let i = index_of(id);
                    if done[i] {
                        continue;
                    }
                    if !observed[i] {
                        observed[i] = true;
                        track.trace.push(Event::Observe { target: i });
                    }
                    if reaches(stop.pose, i) {
                        done[i] = true;
                        manipulated += 1;
                        track.trace.push(Event::Manipulate {
                            target: i,
                            pose: stop.pose,
                        });
                    }
                }
                // Targets already observed this episode can be finished from
                // any later stop that happens to reach them.
                for i in 0..n {
                    if observed[i] && !done[i] && reaches(stop.pose, i) {
                        done[i] = true;
                        manipulated += 1;
                        track.trace.push(Event::Manipulate {
                            target: i,
                            pose: stop.pose,
                        });
                    }
                }
            }

            let pending: Vec<usize> = (0..n).filter(|&i| !done[i]).collect();
            if pending.is_empty() {
                return Ok(track.finish(self.scene.goal(), true));
            }
            idle_rounds = if manipulated == 0 { idle_rounds + 1 } else { 0 };
            if idle_rounds >= 2 {
                return Ok(track.finish(self.scene.goal(), false));
            }
            track.replan();
            let ptrm = self.replan_map(&pending, &observed, truth)?;
            let next = plan_from_ptrm(ptrm, track.at, self.scene.goal(), &self.cfg)?;
            current = Some((next, pending));
        }
    }

    /// The initial map with observed rows collapsed onto their true points,
    /// restricted to pending targets.
    fn replan_map(&self, pending: &[usize], observed: &[bool], truth: &GroundTruth) -> Result<Ptrm> {
        let mut ptrm = self.initial.ptrm.clone();
        for &i in pending {
            if observed[i] && !self.scene.beliefs()[i].is_collapsed() {
                ptrm = ptrm.collapse(i, truth.mpois[i])?;
            }
        }
        Ok(ptrm.subset(pending))
    }
}

pub fn simulate_episode(scene: &Scene, arm: &ArmParams, cfg: &PlannerConfig, truth: &GroundTruth) -> Result<Episode> {
    Rhtp::new(scene, arm, cfg)?.run(truth)
}

/// The greedy baseline: serve the nearest unprocessed target from its most
/// likely base cell, one target at a time.
pub struct NaiveCapm<'a> {
    scene: &'a Scene,
    arm: ArmParams,
    gamma: f64,
    ptrm: Ptrm,
    /// Per target, the support cells of maximal reach probability.
    top_cells: Vec<Vec<usize>>,
}

impl<'a> NaiveCapm<'a> {
    pub fn new(scene: &'a Scene, arm: &ArmParams, cfg: &PlannerConfig) -> Result<Self> {
        let ptrm = build_ptrm(scene, arm, cfg.cell_size, cfg.mc_samples, cfg.seed)?;
        Self::with_ptrm(scene, arm, cfg.gamma, ptrm)
    }

    pub fn with_ptrm(scene: &'a Scene, arm: &ArmParams, gamma: f64, ptrm: Ptrm) -> Result<Self> {
        if ptrm.len() != scene.len() {
            return Err(Error::validation("ptrm", "rows do not match the scene targets"));
        }
        let mut top_cells = Vec::with_capacity(ptrm.len());
        for row in 0..ptrm.len() {
            let prob = ptrm.prob(row);
            let best = ptrm.support(row).iter().map(|&c| prob[c]).fold(0.0, f64::max);
            let cells: Vec<usize> = ptrm.support(row).iter().copied().filter(|&c| prob[c] == best).collect();
            if cells.is_empty() {
                return Err(Error::EmptyTaskSpace);
            }
            top_cells.push(cells);
        }
        Ok(Self {
            scene,
            arm: *arm,
            gamma,
            ptrm,
            top_cells,
        })
    }

    pub fn run(&self, truth: &GroundTruth) -> Result<Episode> {
        truth.validate(self.scene)?;
        let n = self.scene.len();
        let grid = self.ptrm.grid();
        let mut track = Tracker::new(self.scene.start(), self.gamma);
        let mut processed = vec![false; n];
        for _ in 0..n {
            let at = track.at;
            let i = (0..n)
                .filter(|&i| !processed[i])
                .min_by(|&a, &b| {
                    let d = |k: usize| self.scene.targets()[k].center.dist_sq(at);
                    d(a).total_cmp(&d(b)).then(a.cmp(&b))
                })
                .expect("an unprocessed target remains");
            processed[i] = true;
            // Ties between equally likely cells go to the one nearest the base.
            let pose = grid.cell_center(nearest_cell(grid, &self.top_cells[i], at).expect("non-empty"));
            track.stop_at(pose);
            track.trace.push(Event::Observe { target: i });
            let annulus = manipulation_region(truth.mpois[i], &self.arm);
            if !annulus.contains(pose) {
                track.replan();
                let here = track.at;
                let Some(cell) = nearest_cell(grid, &grid.rasterize(&annulus), here) else {
                    return Ok(track.finish(self.scene.goal(), false));
                };
                track.stop_at(grid.cell_center(cell));
            }
            let pose = track.at;
            track.trace.push(Event::Manipulate { target: i, pose });
        }
        Ok(track.finish(self.scene.goal(), true))
    }
}

fn nearest_cell(grid: &BaseGrid, cells: &[usize], to: Point2) -> Option<usize> {
    cells.iter().copied().min_by(|&a, &b| {
        let d = |c| grid.cell_center(c).dist_sq(to);
        d(a).total_cmp(&d(b)).then(a.cmp(&b))
    })
}

pub fn naive_capm_episode(
    scene: &Scene,
    arm: &ArmParams,
    cfg: &PlannerConfig,
    truth: &GroundTruth,
) -> Result<Episode> {
    NaiveCapm::new(scene, arm, cfg)?.run(truth)
}
