//! Independent oracles shared by the integration tests. Nothing here calls
//! into the planner beyond reading its outputs.

#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rhtp_core::executor::{Episode, Event};
use rhtp_core::planner::{PlanOutcome, SelectionModel};
use rhtp_core::{ArmParams, BeliefState, GroundTruth, Point2, Scene};

pub fn experiment_arm() -> ArmParams {
    ArmParams {
        manip_r_min: 0.3,
        manip_r_max: 1.8,
        obs_r_min: 0.0,
        obs_r_max: 2.15,
    }
}

/// `1 - prod (1 - P)` over the selected columns, in plain product form.
pub fn covered(prob: ArrayView2<'_, f64>, phi: &[bool], target: usize) -> f64 {
    let fail: f64 = phi
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(j, _)| 1.0 - prob[[target, j]])
        .product();
    1.0 - fail
}

/// Cost of a vertex sequence, summed left to right.
pub fn sequence_cost(dist: &Array2<f64>, gamma: f64, seq: &[usize]) -> f64 {
    let mut travel = 0.0;
    for w in seq.windows(2) {
        travel += dist[[w[0], w[1]]];
    }
    (seq.len() - 2) as f64 + gamma * travel
}

/// Exhaustive optimum: every coverage-feasible region subset, each routed by
/// a Held-Karp shortest Hamiltonian path from vertex 0 to vertex r + 1.
/// Returns the optimal cost and a sequence achieving it.
pub fn brute_force(model: &SelectionModel) -> Option<(f64, Vec<usize>)> {
    let r = model.n_regions();
    let n = model.n_targets();
    let goal = r + 1;
    let d = &model.dist;
    let full = 1usize << r;
    // best[mask][j]: shortest walk from 0 through exactly `mask`, ending at
    // region j (bit j of mask).
    let mut best = vec![vec![f64::INFINITY; r]; full];
    let mut back = vec![vec![usize::MAX; r]; full];
    for j in 0..r {
        best[1 << j][j] = d[[0, j + 1]];
    }
    for mask in 1..full {
        for j in 0..r {
            if mask >> j & 1 == 0 || !best[mask][j].is_finite() {
                continue;
            }
            for k in 0..r {
                if mask >> k & 1 == 1 {
                    continue;
                }
                let next = mask | 1 << k;
                let c = best[mask][j] + d[[j + 1, k + 1]];
                if c < best[next][k] {
                    best[next][k] = c;
                    back[next][k] = j;
                }
            }
        }
    }
    let mut answer: Option<(f64, Vec<usize>)> = None;
    for mask in 0..full {
        let phi: Vec<bool> = (0..r).map(|j| mask >> j & 1 == 1).collect();
        if (0..n).any(|i| covered(model.prob.view(), &phi, i) < model.delta) {
            continue;
        }
        let seq = if mask == 0 {
            vec![0, goal]
        } else {
            let end = (0..r)
                .filter(|&j| mask >> j & 1 == 1)
                .min_by(|&a, &b| (best[mask][a] + d[[a + 1, goal]]).total_cmp(&(best[mask][b] + d[[b + 1, goal]])))
                .unwrap();
            let mut rev = vec![goal];
            let (mut m, mut j) = (mask, end);
            while j != usize::MAX {
                rev.push(j + 1);
                let prev = back[m][j];
                m &= !(1 << j);
                j = prev;
            }
            rev.push(0);
            rev.reverse();
            rev
        };
        let cost = sequence_cost(d, model.gamma, &seq);
        if answer.as_ref().is_none_or(|(c, _)| cost < *c) {
            answer = Some((cost, seq));
        }
    }
    answer
}

/// Checks a plan against the selection problem it came from: coverage per
/// target, degree constraints, a single start-to-goal path through every
/// selected region, poses inside their regions, and the reported cost.
pub fn check_plan(out: &PlanOutcome, delta: f64, gamma: f64) -> Result<(), String> {
    let r = out.set.partition.len();
    let sel = &out.selection;
    let prob = out.set.prob.view();
    for i in 0..prob.nrows() {
        let c = covered(prob, &sel.phi, i);
        if c < delta {
            return Err(format!("target row {i} covered with {c} < {delta}"));
        }
    }
    let mut degree = vec![0usize; r + 2];
    let mut adj = vec![Vec::new(); r + 2];
    for &(a, b) in &sel.edges {
        if a == b || a > r + 1 || b > r + 1 {
            return Err(format!("bad edge ({a}, {b})"));
        }
        degree[a] += 1;
        degree[b] += 1;
        adj[a].push(b);
        adj[b].push(a);
    }
    if degree[0] != 1 || degree[r + 1] != 1 {
        return Err(format!("endpoint degrees {} and {}", degree[0], degree[r + 1]));
    }
    for j in 1..=r {
        let want = if sel.phi[j - 1] { 2 } else { 0 };
        if degree[j] != want {
            return Err(format!("region {j} has degree {} but phi says {want}", degree[j]));
        }
    }
    let mut walk = vec![0];
    let mut prev = usize::MAX;
    let mut at = 0;
    while at != r + 1 {
        let next = *adj[at].iter().find(|&&v| v != prev).ok_or("path stops early")?;
        prev = at;
        at = next;
        walk.push(at);
        if walk.len() > r + 2 {
            return Err("path revisits a vertex".into());
        }
    }
    let kappa = sel.phi.iter().filter(|&&on| on).count();
    if walk.len() != kappa + 2 {
        return Err(format!("path visits {} regions of {kappa} selected", walk.len() - 2));
    }
    if sel.edges.len() != kappa + 1 {
        return Err(format!("{} edges for {kappa} stops: a detached cycle remains", sel.edges.len()));
    }
    let plan = &out.plan;
    if plan.sequence != walk || plan.kappa != kappa || plan.stops.len() != kappa {
        return Err("plan disagrees with the selection".into());
    }
    let mut at = plan.start;
    let mut length = 0.0;
    let mut assigned = vec![false; prob.nrows()];
    let ids: Vec<usize> = out.ptrm.trois().iter().map(|t| t.id).collect();
    for (k, stop) in plan.stops.iter().enumerate() {
        if stop.region != walk[k + 1] {
            return Err(format!("stop {k} is in region {} but the path says {}", stop.region, walk[k + 1]));
        }
        if out.set.partition.region(stop.region).cells.binary_search(&stop.cell).is_err() {
            return Err(format!("stop {k} pose lies outside region {}", stop.region));
        }
        for id in &stop.targets {
            let row = ids.iter().position(|x| x == id).ok_or("unknown target")?;
            assigned[row] = true;
        }
        length += at.dist(stop.pose);
        at = stop.pose;
    }
    length += at.dist(plan.goal);
    if let Some(row) = assigned.iter().position(|a| !a) {
        return Err(format!("target {} is not assigned to any stop", ids[row]));
    }
    let cost = kappa as f64 + gamma * length;
    if (cost - plan.cost).abs() > 1e-9 {
        return Err(format!("reported cost {} but the poses give {cost}", plan.cost));
    }
    Ok(())
}

/// Observation precedes manipulation for every target.
pub fn ofml_violations(ep: &Episode, n: usize) -> usize {
    let mut observed = vec![false; n];
    let mut violations = 0;
    for e in &ep.trace {
        match *e {
            Event::Observe { target } => observed[target] = true,
            Event::Manipulate { target, .. } if !observed[target] => violations += 1,
            _ => {}
        }
    }
    violations
}

/// Manipulation events whose base pose is not within reach of the true point.
pub fn reach_violations(ep: &Episode, truth: &GroundTruth, arm: &ArmParams) -> usize {
    ep.trace
        .iter()
        .filter(|e| match **e {
            Event::Manipulate { target, pose } => {
                let d = pose.dist(truth.mpois[target]);
                !(d >= arm.manip_r_min && d <= arm.manip_r_max)
            }
            _ => false,
        })
        .count()
}

/// Completed episodes must manipulate every target exactly once.
pub fn completion_violations(ep: &Episode, scene: &Scene) -> usize {
    if !ep.metrics.completed {
        return 0;
    }
    let mut count = vec![0; scene.len()];
    for e in &ep.trace {
        if let Event::Manipulate { target, .. } = *e {
            count[target] += 1;
        }
    }
    count.iter().filter(|&&c| c != 1).count()
}

/// Self-normalized importance estimate of the reach probability: uniform
/// draws over the TROI weighted by the unnormalized Gaussian density.
pub fn reach_oracle(cell: Point2, belief: &BeliefState, center: Point2, radius: f64, arm: &ArmParams, samples: usize, rng: &mut impl Rng) -> f64 {
    let BeliefState::Truncated(tn) = belief else {
        panic!("oracle is for truncated beliefs");
    };
    let (a, b, c) = (tn.cov.xx, tn.cov.xy, tn.cov.yy);
    let det = a * c - b * b;
    let (ia, ib, ic) = (c / det, -b / det, a / det);
    let mut hit = 0.0;
    let mut total = 0.0;
    for _ in 0..samples {
        let rho = radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let p = Point2::new(center.x + rho * theta.cos(), center.y + rho * theta.sin());
        let (dx, dy) = (p.x - tn.mean.x, p.y - tn.mean.y);
        let w = (-0.5 * (ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy)).exp();
        total += w;
        let d = cell.dist(p);
        if d >= arm.manip_r_min && d <= arm.manip_r_max {
            hit += w;
        }
    }
    hit / total
}
