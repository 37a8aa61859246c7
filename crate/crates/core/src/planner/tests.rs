use ndarray::{array, Array2};
use proptest::prelude::*;

use super::*;
use crate::geometry::Rect;
use crate::scene::{BeliefState, Cov2, Troi, TruncatedNormal};

fn euclid(points: &[(f64, f64)]) -> Array2<f64> {
    let n = points.len();
    Array2::from_shape_fn((n, n), |(a, b)| {
        let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
        (dx * dx + dy * dy).sqrt()
    })
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Exhaustive optimum: every coverage-feasible subset, every visiting order.
fn oracle(model: &SelectionModel) -> Option<f64> {
    let r = model.n_regions();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << r) {
        let phi: Vec<bool> = (0..r).map(|j| mask >> j & 1 == 1).collect();
        let covered =
            (0..model.n_targets()).all(|i| coverage_probability(&phi, model.prob.view(), i) >= model.delta);
        if !covered {
            continue;
        }
        let chosen: Vec<usize> = (0..r).filter(|&j| phi[j]).map(|j| j + 1).collect();
        for order in permutations(&chosen) {
            let mut seq = vec![0];
            seq.extend(order);
            seq.push(r + 1);
            let cost = model.path_objective(&seq);
            if best.is_none_or(|b| cost < b) {
                best = Some(cost);
            }
        }
    }
    best
}

fn check_structure(model: &SelectionModel, sel: &Selection) {
    let r = model.n_regions();
    let mut degree = vec![0; r + 2];
    for &(a, b) in &sel.edges {
        assert!(a < b);
        degree[a] += 1;
        degree[b] += 1;
    }
    assert_eq!(degree[0], 1);
    assert_eq!(degree[r + 1], 1);
    for j in 0..r {
        assert_eq!(degree[j + 1], if sel.phi[j] { 2 } else { 0 });
    }
    let seq = sel.sequence(r);
    assert_eq!(seq.len(), sel.kappa() + 2, "path must visit every selected region");
    assert_eq!(*seq.last().unwrap(), r + 1);
}

#[test]
fn coverage_examples() {
    let p = array![[0.5, 0.5, 1.0]];
    assert_eq!(coverage_probability(&[false, false, false], p.view(), 0), 0.0);
    assert!((coverage_probability(&[true, true, false], p.view(), 0) - 0.75).abs() < 1e-15);
    assert_eq!(coverage_probability(&[true, false, true], p.view(), 0), 1.0);
}

#[test]
fn single_region_is_selected() {
    let prob = array![[0.8]];
    let dist = euclid(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
    let model = SelectionModel::new(prob, dist, 1.12, 0.7).unwrap();
    let sel = solve(&model, &SolverOptions::default()).unwrap();
    assert_eq!(sel.phi, vec![true]);
    assert_eq!(sel.sequence(1), vec![0, 1, 2]);
    assert!((sel.objective - (1.0 + 1.12 * 2.0)).abs() < 1e-12);
}

#[test]
fn two_weak_regions_combine() {
    // 1 - 0.5 * 0.5 = 0.75 >= 0.7 while neither region alone suffices.
    let prob = array![[0.5, 0.5]];
    let dist = euclid(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
    let model = SelectionModel::new(prob, dist, 1.0, 0.7).unwrap();
    let sel = solve(&model, &SolverOptions::default()).unwrap();
    assert_eq!(sel.phi, vec![true, true]);
    check_structure(&model, &sel);
}

#[test]
fn infeasible_targets_are_named() {
    let prob = array![[0.9, 0.0], [0.3, 0.2]];
    let dist = euclid(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
    let model = SelectionModel::new(prob, dist, 1.0, 0.7).unwrap();
    match solve(&model, &SolverOptions::default()) {
        Err(Error::Infeasible { targets }) => assert_eq!(targets, vec![1]),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn detached_cycle_is_cut() {
    // Start and goal coincide far from a cluster of three mandatory regions,
    // so the relaxation first closes a triangle and joins start to goal.
    let prob = array![[0.9, 0.0, 0.0], [0.0, 0.9, 0.0], [0.0, 0.0, 0.9]];
    let dist = euclid(&[(0.0, 0.0), (5.0, 0.0), (5.1, 0.0), (5.0, 0.1), (0.0, 0.0)]);
    let model = SelectionModel::new(prob, dist, 1.0, 0.7).unwrap();
    let sel = solve(&model, &SolverOptions::default()).unwrap();
    check_structure(&model, &sel);
    assert!(sel.stats.cuts >= 1);
    assert_eq!(sel.objective, oracle(&model).unwrap());
}

#[test]
fn node_limit_is_enforced() {
    let prob = array![[0.5, 0.5, 0.5, 0.5]];
    let dist = euclid(&[(0.0, 0.0), (1.0, 0.3), (1.2, 0.9), (0.4, 1.1), (0.9, 0.2), (2.0, 0.0)]);
    let model = SelectionModel::new(prob, dist, 1.0, 0.7).unwrap();
    match solve(&model, &SolverOptions { node_limit: 0 }) {
        Err(Error::NodeLimit { limit: 0 }) => {}
        other => panic!("expected node limit, got {other:?}"),
    }
}

#[test]
fn model_rejects_bad_parameters() {
    let prob = array![[0.5]];
    let dist = Array2::zeros((3, 3));
    assert!(SelectionModel::new(prob.clone(), dist.clone(), 0.0, 0.7).is_err());
    assert!(SelectionModel::new(prob.clone(), dist.clone(), 1.0, 1.0).is_err());
    assert!(SelectionModel::new(prob.clone(), Array2::zeros((2, 2)), 1.0, 0.7).is_err());
    assert!(SelectionModel::new(array![[1.5]], dist, 1.0, 0.7).is_err());
}

fn instance() -> impl Strategy<Value = SelectionModel> {
    (1usize..=3, 1usize..=6).prop_flat_map(|(n, r)| {
        (
            prop::collection::vec(prop_oneof![Just(0.0), 0.05..1.0f64, Just(1.0)], n * r),
            prop::collection::vec((0.0..3.0f64, 0.0..3.0f64), r + 2),
            0.5..2.0f64,
            0.3..0.95f64,
        )
            .prop_map(move |(p, pts, gamma, delta)| {
                let prob = Array2::from_shape_vec((n, r), p).unwrap();
                SelectionModel::new(prob, euclid(&pts), gamma, delta).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_exhaustive_oracle(model in instance()) {
        match (solve(&model, &SolverOptions::default()), oracle(&model)) {
            (Ok(sel), Some(best)) => {
                check_structure(&model, &sel);
                let seq = sel.sequence(model.n_regions());
                prop_assert_eq!(sel.objective, model.path_objective(&seq));
                prop_assert!((sel.objective - best).abs() <= 1e-9 * best.max(1.0),
                    "bnb {} oracle {}", sel.objective, best);
                for i in 0..model.n_targets() {
                    prop_assert!(coverage_probability(&sel.phi, model.prob.view(), i) >= model.delta);
                }
            }
            (Err(Error::Infeasible { .. }), None) => {}
            (got, want) => prop_assert!(false, "solver {:?} vs oracle {:?}", got, want),
        }
    }
}

fn one_target_scene(mean: Point2) -> Scene {
    let troi = Troi {
        id: 7,
        center: Point2::new(0.5, 0.5),
        radius: 0.1,
    };
    let belief = BeliefState::Truncated(TruncatedNormal {
        mean,
        cov: Cov2::isotropic(0.1),
        center: troi.center,
        radius: troi.radius,
    });
    Scene::new(
        Rect::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)),
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 1.0),
        vec![troi],
        vec![belief],
    )
    .unwrap()
}

fn wide_arm() -> ArmParams {
    ArmParams {
        manip_r_min: 0.3,
        manip_r_max: 1.1,
        obs_r_min: 0.0,
        obs_r_max: 1.4,
    }
}

#[test]
fn plan_serves_every_target_once() {
    let scene = one_target_scene(Point2::new(0.5, 0.5));
    let cfg = PlannerConfig {
        cell_size: 0.05,
        mc_samples: 300,
        ..PlannerConfig::default()
    };
    let out = plan_scene(&scene, &wide_arm(), &cfg).unwrap();
    let plan = &out.plan;
    assert_eq!(plan.kappa, out.selection.kappa());
    assert_eq!(plan.sequence[0], 0);
    assert_eq!(*plan.sequence.last().unwrap(), out.set.partition.len() + 1);
    let served: Vec<usize> = plan.stops.iter().flat_map(|s| s.targets.clone()).collect();
    assert_eq!(served, vec![7]);
    for stop in &plan.stops {
        assert!(out.set.partition.region(stop.region).cells.contains(&stop.cell));
    }
    assert!((plan.cost - crate::executor::energy_cost(plan, cfg.gamma)).abs() < 1e-12);
}

#[test]
fn region_mean_poses_do_not_undercut_the_priced_probability() {
    let scene = one_target_scene(Point2::new(0.45, 0.5));
    let cfg = PlannerConfig {
        cell_size: 0.05,
        mc_samples: 300,
        pose_rule: PoseRule::RegionMean,
        ..PlannerConfig::default()
    };
    let out = plan_scene(&scene, &wide_arm(), &cfg).unwrap();
    for stop in &out.plan.stops {
        let region = out.set.partition.region(stop.region);
        for &row in &region.parents {
            assert!(out.ptrm.prob(row)[stop.cell] >= out.set.prob[[row, stop.region - 1]] - 1e-12);
        }
    }
}

#[test]
fn plan_json_has_the_documented_keys() {
    let scene = one_target_scene(Point2::new(0.5, 0.5));
    let cfg = PlannerConfig {
        cell_size: 0.05,
        mc_samples: 200,
        ..PlannerConfig::default()
    };
    let out = plan_scene(&scene, &wide_arm(), &cfg).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out.plan.to_json()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, vec!["cost", "kappa", "sequence", "stops"]);
    let stop = &v["stops"][0];
    assert!(stop["pose"].as_array().unwrap().len() == 2);
    assert!(stop["region"].is_u64());
    assert_eq!(stop["targets"][0], 7);
}
