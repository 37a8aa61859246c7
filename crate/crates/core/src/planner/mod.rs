//! Region selection and routing: a set-cover constraint over the partition
//! probability matrix combined with a start-to-goal path through the
//! selected regions, solved exactly by branch-and-bound, then turned into
//! concrete base stops.

mod bnb;
mod pose;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use bnb::{solve, Selection, SolveStats, SolverOptions};
pub use pose::{best_poses, farthest_point_sample, PoseRule};

use crate::error::{Error, Result};
use crate::executor::energy;
use crate::geometry::Point2;
use crate::partition::PartitionSet;
use crate::reachability::{build_ptrm, Ptrm};
use crate::scene::{ArmParams, Scene};

/// `1 - prod_j (1 - phi_j P[i][j])`: probability that at least one selected
/// region lets the base reach target row `target`.
pub fn coverage_probability(phi: &[bool], prob: ArrayView2<'_, f64>, target: usize) -> f64 {
    let mut log_fail = 0.0;
    for (j, &selected) in phi.iter().enumerate() {
        if !selected {
            continue;
        }
        let p = prob[[target, j]];
        if p >= 1.0 {
            return 1.0;
        }
        log_fail += (-p).ln_1p();
    }
    -log_fail.exp_m1()
}

/// Inputs to the region selection problem.
#[derive(Clone, Debug)]
pub struct SelectionModel {
    /// `n × r` success probabilities; column `j` is region vertex `j + 1`.
    pub prob: Array2<f64>,
    /// `(r + 2) × (r + 2)` symmetric travel distances over the vertex set
    /// `{0 = start, 1..=r regions, r + 1 = goal}`.
    pub dist: Array2<f64>,
    /// Travel cost per meter relative to the cost of one base stop.
    pub gamma: f64,
    /// Per-target coverage threshold.
    pub delta: f64,
}

impl SelectionModel {
    pub fn new(prob: Array2<f64>, dist: Array2<f64>, gamma: f64, delta: f64) -> Result<Self> {
        let r = prob.ncols();
        if dist.dim() != (r + 2, r + 2) {
            return Err(Error::validation(
                "dist",
                format!("expected {0}x{0} for {r} regions", r + 2),
            ));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::validation("gamma", "must be positive"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::validation("delta", "must lie in (0, 1)"));
        }
        if prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation("prob", "entries must lie in [0, 1]"));
        }
        Ok(Self { prob, dist, gamma, delta })
    }

    pub fn from_partition(set: &PartitionSet, gamma: f64, delta: f64) -> Result<Self> {
        Self::new(set.prob.clone(), set.dist.clone(), gamma, delta)
    }

    pub fn n_regions(&self) -> usize {
        self.prob.ncols()
    }

    pub fn n_targets(&self) -> usize {
        self.prob.nrows()
    }

    /// Stops plus weighted travel along `sequence`, summed in visiting order.
    pub fn path_objective(&self, sequence: &[usize]) -> f64 {
        let travel: f64 = sequence.windows(2).map(|w| self.dist[[w[0], w[1]]]).sum();
        (sequence.len() - 2) as f64 + self.gamma * travel
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stop {
    /// Region vertex id the pose was drawn from.
    pub region: usize,
    pub pose: Point2,
    pub cell: usize,
    /// Target ids first served at this stop.
    pub targets: Vec<usize>,
}

/// An ordered list of base stops with their assigned targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub start: Point2,
    pub goal: Point2,
    pub stops: Vec<Stop>,
    pub kappa: usize,
    pub path_length: f64,
    pub cost: f64,
    /// Visited vertices, beginning with 0 and ending with `r + 1`.
    pub sequence: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    stops: Vec<StopFile>,
    kappa: usize,
    cost: f64,
    sequence: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct StopFile {
    region: usize,
    pose: Point2,
    targets: Vec<usize>,
}

impl Plan {
    pub fn to_json(&self) -> String {
        let file = PlanFile {
            stops: self
                .stops
                .iter()
                .map(|s| StopFile {
                    region: s.region,
                    pose: s.pose,
                    targets: s.targets.clone(),
                })
                .collect(),
            kappa: self.kappa,
            cost: self.cost,
            sequence: self.sequence.clone(),
        };
        serde_json::to_string_pretty(&file).expect("plan serialization is infallible")
    }

    pub fn poses(&self) -> impl Iterator<Item = Point2> + '_ {
        self.stops.iter().map(|s| s.pose)
    }
}

/// Knobs for one planning pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub cell_size: f64,
    pub mc_samples: usize,
    pub gamma: f64,
    pub delta: f64,
    pub seed: u64,
    pub pose_rule: PoseRule,
    pub candidate_cap: usize,
    pub node_limit: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.02,
            mc_samples: 2000,
            gamma: 1.12,
            delta: 0.7,
            seed: 0,
            pose_rule: PoseRule::default(),
            candidate_cap: 256,
            node_limit: 1_000_000,
        }
    }
}

/// Walks the selected path and picks one pose per visited region, then
/// assigns each target to the earliest stop whose pose lies in its support.
pub fn extract_plan(
    selection: &Selection,
    set: &PartitionSet,
    ptrm: &Ptrm,
    gamma: f64,
    rule: PoseRule,
    candidate_cap: usize,
) -> Plan {
    let r = set.partition.len();
    let sequence = selection.sequence(r);
    let grid = set.partition.grid();

    let candidates: Vec<Vec<usize>> = sequence[1..sequence.len() - 1]
        .iter()
        .map(|&id| {
            let cells = pose::candidate_cells(set, ptrm, id, rule);
            farthest_point_sample(grid, &cells, candidate_cap)
        })
        .collect();
    let layers: Vec<Vec<Point2>> = candidates
        .iter()
        .map(|cells| cells.iter().map(|&c| grid.cell_center(c)).collect())
        .collect();
    let (choice, path_length) = best_poses(set.start, set.goal, &layers);

    let mut assigned = vec![false; ptrm.len()];
    let stops: Vec<Stop> = sequence[1..sequence.len() - 1]
        .iter()
        .zip(&candidates)
        .zip(&choice)
        .map(|((&region, cells), &k)| {
            let cell = cells[k];
            let mut targets = Vec::new();
            for row in 0..ptrm.len() {
                if !assigned[row] && ptrm.in_support(row, cell) {
                    assigned[row] = true;
                    targets.push(ptrm.troi(row).id);
                }
            }
            targets.sort_unstable();
            Stop {
                region,
                pose: grid.cell_center(cell),
                cell,
                targets,
            }
        })
        .collect();
    let kappa = stops.len();
    Plan {
        start: set.start,
        goal: set.goal,
        kappa,
        path_length,
        cost: energy(kappa, gamma, path_length),
        stops,
        sequence,
    }
}

/// Everything produced by one planning pass over a scene.
#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub ptrm: Ptrm,
    pub set: PartitionSet,
    pub model: SelectionModel,
    pub selection: Selection,
    pub plan: Plan,
}

/// Builds the PTRM, partitions it, solves the selection problem, and
/// extracts the plan.
pub fn plan_scene(scene: &Scene, arm: &ArmParams, cfg: &PlannerConfig) -> Result<PlanOutcome> {
    let ptrm = build_ptrm(scene, arm, cfg.cell_size, cfg.mc_samples, cfg.seed)?;
    plan_from_ptrm(ptrm, scene.start(), scene.goal(), cfg)
}

pub fn plan_from_ptrm(ptrm: Ptrm, start: Point2, goal: Point2, cfg: &PlannerConfig) -> Result<PlanOutcome> {
    let set = PartitionSet::build(&ptrm, start, goal)?;
    let model = SelectionModel::from_partition(&set, cfg.gamma, cfg.delta)?;
    let options = SolverOptions {
        node_limit: cfg.node_limit,
    };
    let selection = solve(&model, &options).map_err(|e| match e {
        Error::Infeasible { targets } => Error::Infeasible {
            targets: targets.iter().map(|&row| ptrm.troi(row).id).collect(),
        },
        other => other,
    })?;
    let plan = extract_plan(&selection, &set, &ptrm, cfg.gamma, cfg.pose_rule, cfg.candidate_cap);
    Ok(PlanOutcome {
        ptrm,
        set,
        model,
        selection,
        plan,
    })
}

#[cfg(test)]
mod tests;
