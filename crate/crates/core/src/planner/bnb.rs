use std::cmp::Ordering;
use std::collections::BinaryHeap;

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, Variable};

use super::{coverage_probability, SelectionModel};
use crate::error::{Error, Result};

/// Keeps `1 - P` away from zero so the log weights stay finite.
const P_CLAMP: f64 = 1.0 - 1e-9;
/// Added to the log-space coverage rhs to absorb LP round-off.
const RHS_MARGIN: f64 = 1e-7;
const INT_TOL: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolverOptions {
    pub node_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { node_limit: 1_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub nodes: usize,
    pub cuts: usize,
}

/// An optimal region selection and the path through it.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// `phi[j]` is set when region vertex `j + 1` is visited.
    pub phi: Vec<bool>,
    /// Path edges as vertex pairs `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
    pub objective: f64,
    pub stats: SolveStats,
}

impl Selection {
    pub fn kappa(&self) -> usize {
        self.phi.iter().filter(|&&p| p).count()
    }

    /// Vertices in visiting order from the start (0) to the goal (`r + 1`).
    pub fn sequence(&self, r: usize) -> Vec<usize> {
        walk_path(&self.edges, r + 2)
    }
}

fn walk_path(edges: &[(usize, usize)], n_vertices: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n_vertices];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let goal = n_vertices - 1;
    let mut seq = vec![0];
    let mut prev = usize::MAX;
    let mut cur = 0;
    while cur != goal {
        let Some(&next) = adj[cur].iter().find(|&&v| v != prev) else {
            break;
        };
        prev = cur;
        cur = next;
        seq.push(cur);
    }
    seq
}

struct Layout {
    r: usize,
    phi: Vec<Variable>,
    /// Edge variables in `(a, b)` lexicographic order, `a < b`.
    edges: Vec<((usize, usize), Variable)>,
}

impl Layout {
    fn n_vertices(&self) -> usize {
        self.r + 2
    }

    fn edge_index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let n = self.n_vertices();
        a * (2 * n - a - 1) / 2 + (b - a - 1)
    }

    fn var(&self, k: usize) -> Variable {
        if k < self.r {
            self.phi[k]
        } else {
            self.edges[k - self.r].1
        }
    }

    fn n_vars(&self) -> usize {
        self.r + self.edges.len()
    }
}

fn build_problem(model: &SelectionModel) -> (Problem, Layout) {
    let r = model.n_regions();
    let n = r + 2;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let phi: Vec<Variable> = (0..r).map(|_| lp.add_var(1.0, (0.0, 1.0))).collect();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let v = lp.add_var(model.gamma * model.dist[[a, b]], (0.0, 1.0));
            edges.push(((a, b), v));
        }
    }
    let layout = Layout { r, phi, edges };

    let rhs = -(1.0 - model.delta).ln() + RHS_MARGIN;
    for i in 0..model.n_targets() {
        let mut expr = LinearExpr::empty();
        for j in 0..r {
            let p = model.prob[[i, j]];
            if p > 0.0 {
                // A region that alone meets the threshold gets weight equal
                // to the rhs: same integer points, much tighter relaxation.
                let w = -(1.0 - p.min(P_CLAMP)).ln();
                expr.add(layout.phi[j], w.min(rhs));
            }
        }
        lp.add_constraint(expr, ComparisonOp::Ge, rhs);
    }

    for v in 0..n {
        let mut expr = LinearExpr::empty();
        for u in 0..n {
            if u != v {
                expr.add(layout.edges[layout.edge_index(u, v)].1, 1.0);
            }
        }
        if v == 0 || v == n - 1 {
            lp.add_constraint(expr, ComparisonOp::Eq, 1.0);
        } else {
            expr.add(layout.phi[v - 1], -2.0);
            lp.add_constraint(expr, ComparisonOp::Eq, 0.0);
        }
    }
    (lp, layout)
}

/// Subsets of selected region vertices that form cycles detached from the
/// start-goal path in an integral solution.
fn detached_cycles(layout: &Layout, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let n = layout.n_vertices();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    let mut cycles = Vec::new();
    for s in 0..n {
        if seen[s] || adj[s].is_empty() {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut k = 0;
        while k < comp.len() {
            for &u in &adj[comp[k]] {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                }
            }
            k += 1;
        }
        comp.sort_unstable();
        cycles.push(comp);
    }
    cycles
}

fn subtour_cut(layout: &Layout, set: &[usize]) -> LinearExpr {
    let mut expr = LinearExpr::empty();
    for (x, &a) in set.iter().enumerate() {
        for &b in &set[x + 1..] {
            expr.add(layout.edges[layout.edge_index(a, b)].1, 1.0);
        }
    }
    expr
}

#[derive(Debug)]
struct Node {
    bound: f64,
    seq: u64,
    fixings: Vec<(usize, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap; the smallest bound, then the oldest node,
    // must compare greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn infeasible_targets(model: &SelectionModel) -> Vec<usize> {
    let all = vec![true; model.n_regions()];
    (0..model.n_targets())
        .filter(|&i| coverage_probability(&all, model.prob.view(), i) < model.delta)
        .collect()
}

/// Region selection and path edges of an integral solution.
type Integral = (Vec<bool>, Vec<(usize, usize)>);

fn as_integral(layout: &Layout, sol: &Solution) -> Option<Integral> {
    let mut phi = Vec::with_capacity(layout.r);
    for &v in &layout.phi {
        let x = sol[v];
        if (x - x.round()).abs() > INT_TOL {
            return None;
        }
        phi.push(x > 0.5);
    }
    let mut edges = Vec::new();
    for &(e, v) in &layout.edges {
        let x = sol[v];
        if (x - x.round()).abs() > INT_TOL {
            return None;
        }
        if x > 0.5 {
            edges.push(e);
        }
    }
    Some((phi, edges))
}

/// Fractional variable closest to one half; ties go to the lowest index,
/// which puts region variables ahead of edge variables.
fn branching_var(layout: &Layout, sol: &Solution) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in 0..layout.n_vars() {
        let x = sol[layout.var(k)];
        if (x - x.round()).abs() <= INT_TOL {
            continue;
        }
        let d = (x - 0.5).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k)
}

fn evaluate(base: &Solution, layout: &Layout, fixings: &[(usize, bool)]) -> Option<Solution> {
    let mut sol = base.clone();
    for &(k, up) in fixings {
        sol = sol.fix_var(layout.var(k), if up { 1.0 } else { 0.0 }).ok()?;
    }
    Some(sol)
}

/// Exact minimization of `sum(phi) + gamma * path length` subject to every
/// target reaching the coverage threshold, by best-first branch-and-bound
/// on the LP relaxation with subtour cuts added when an integral solution
/// contains a detached cycle.
pub fn solve(model: &SelectionModel, options: &SolverOptions) -> Result<Selection> {
    let bad = infeasible_targets(model);
    if !bad.is_empty() {
        return Err(Error::Infeasible { targets: bad });
    }
    let (lp, layout) = build_problem(model);
    let mut base = lp.solve()?;
    let mut stats = SolveStats::default();
    let mut incumbent: Option<(f64, Integral)> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: base.objective(),
        seq,
        fixings: Vec::new(),
    });

    let pruned = |bound: f64, inc: &Option<(f64, Integral)>| {
        inc.as_ref()
            .is_some_and(|(best, _)| bound >= best - PRUNE_TOL * best.abs().max(1.0))
    };

    while let Some(node) = heap.pop() {
        if pruned(node.bound, &incumbent) {
            break;
        }
        stats.nodes += 1;
        if stats.nodes > options.node_limit {
            return Err(Error::NodeLimit {
                limit: options.node_limit,
            });
        }
        let Some(mut sol) = evaluate(&base, &layout, &node.fixings) else {
            continue;
        };
        'node: loop {
            if pruned(sol.objective(), &incumbent) {
                break;
            }
            if let Some(k) = branching_var(&layout, &sol) {
                for up in [true, false] {
                    seq += 1;
                    let mut fixings = node.fixings.clone();
                    fixings.push((k, up));
                    heap.push(Node {
                        bound: sol.objective(),
                        seq,
                        fixings,
                    });
                }
                break;
            }
            let (phi, edges) = as_integral(&layout, &sol).expect("no fractional variable");
            let cycles = detached_cycles(&layout, &edges);
            if cycles.is_empty() {
                let objective = model.path_objective(&walk_path(&edges, layout.n_vertices()));
                if !pruned(objective, &incumbent) {
                    incumbent = Some((objective, (phi, edges)));
                }
                break;
            }
            for set in &cycles {
                let rhs = (set.len() - 1) as f64;
                base = base.add_constraint(subtour_cut(&layout, set), ComparisonOp::Le, rhs)?;
                stats.cuts += 1;
                match sol.add_constraint(subtour_cut(&layout, set), ComparisonOp::Le, rhs) {
                    Ok(s) => sol = s,
                    Err(_) => break 'node,
                }
            }
        }
    }

    let (objective, (phi, edges)) = incumbent.ok_or_else(|| Error::Infeasible {
        targets: (0..model.n_targets()).collect(),
    })?;
    Ok(Selection {
        phi,
        edges,
        objective,
        stats,
    })
}
