//! Batch experiments: scenes from files or the generator, many ground-truth
//! draws per scene, both algorithms, per-episode rows and aggregates.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{Episode, EpisodeMetrics, GroundTruth, NaiveCapm, Rhtp};
use crate::geometry::{Point2, Rect};
use crate::planner::{PlanOutcome, PlannerConfig, PoseRule};
use crate::scene::{generate_scene, load_scene, ArmParams, Scene};
use crate::seed;

const SCENE_STREAM: u64 = 1;
const TRUTH_STREAM: u64 = 2;
const PTRM_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rhtp,
    NaiveCapm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rhtp => "rhtp",
            Algorithm::NaiveCapm => "naive_capm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub densities: Vec<f64>,
    pub radii: Vec<f64>,
    pub scenes_per_setting: usize,
    #[serde(default = "unit_square")]
    pub workspace: Rect,
}

fn unit_square() -> Rect {
    Rect::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSource {
    /// Glob pattern of scene JSON files, relative to the working directory.
    Files(String),
    Generate(GeneratorSpec),
}

/// Everything that determines an experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenes: SceneSource,
    pub arm: ArmParams,
    pub cell_size: f64,
    pub mc_samples: usize,
    pub gamma: f64,
    pub delta: f64,
    pub truth_samples: usize,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub pose_rule: PoseRule,
    pub candidate_cap: usize,
    pub node_limit: usize,
    pub charts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let planner = PlannerConfig::default();
        Self {
            scenes: SceneSource::Files("scenes/*.json".into()),
            arm: ArmParams::default(),
            cell_size: planner.cell_size,
            mc_samples: planner.mc_samples,
            gamma: planner.gamma,
            delta: planner.delta,
            truth_samples: 1000,
            algorithms: vec![Algorithm::Rhtp, Algorithm::NaiveCapm],
            seed: 0,
            out_dir: PathBuf::from("out"),
            pose_rule: planner.pose_rule,
            candidate_cap: planner.candidate_cap,
            node_limit: planner.node_limit,
            charts: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::validation("gamma", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::validation("delta", "must lie in (0, 1)"));
        }
        if self.mc_samples < 100 {
            return Err(Error::validation("mc_samples", "must be at least 100"));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::validation("cell_size", "must be positive"));
        }
        if self.truth_samples == 0 {
            return Err(Error::validation("truth_samples", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::validation("algorithms", "list is empty"));
        }
        if let SceneSource::Generate(g) = &self.scenes {
            if g.densities.is_empty() || g.radii.is_empty() || g.scenes_per_setting == 0 {
                return Err(Error::validation("scenes.generate", "no scenes to generate"));
            }
        }
        self.arm.validate()
    }

    /// Planner settings for one scene; the MC seed is tied to the scene so
    /// results do not depend on scheduling.
    pub fn planner(&self, scene_seed: u64) -> PlannerConfig {
        PlannerConfig {
            cell_size: self.cell_size,
            mc_samples: self.mc_samples,
            gamma: self.gamma,
            delta: self.delta,
            seed: scene_seed,
            pose_rule: self.pose_rule,
            candidate_cap: self.candidate_cap,
            node_limit: self.node_limit,
        }
    }
}

/// A scene with the labels it is reported under.
#[derive(Clone, Debug)]
pub struct SceneCase {
    pub id: String,
    /// Seeds the scene's PTRM and truth draws. Generated scenes that differ
    /// only in radius share a key, so a radius sweep compares the same
    /// layouts under the same draws.
    pub key: u64,
    pub density: f64,
    pub radius: f64,
    pub scene: Scene,
}

pub fn collect_scenes(cfg: &RunConfig) -> Result<Vec<SceneCase>> {
    match &cfg.scenes {
        SceneSource::Files(pattern) => {
            let paths = glob::glob(pattern).map_err(|e| Error::validation("scenes.files", e.to_string()))?;
            let mut cases = Vec::new();
            for entry in paths {
                let path = entry.map_err(|e| Error::Io {
                    path: e.path().to_path_buf(),
                    source: e.into(),
                })?;
                let scene = load_scene(&path)?;
                let radius = scene.targets().iter().map(|t| t.radius).sum::<f64>() / scene.len() as f64;
                let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
                cases.push(SceneCase {
                    id,
                    key: cases.len() as u64,
                    density: scene.density(),
                    radius,
                    scene,
                });
            }
            Ok(cases)
        }
        SceneSource::Generate(g) => {
            let mut cases = Vec::new();
            for &density in &g.densities {
                for &radius in &g.radii {
                    for k in 0..g.scenes_per_setting {
                        let key = seed::derive(density.to_bits(), &[k as u64]);
                        let scene = generate_scene(density, g.workspace, radius, seed::derive(cfg.seed, &[SCENE_STREAM, key]))?;
                        cases.push(SceneCase {
                            id: format!("d{density}_r{radius}_{k}"),
                            key,
                            density,
                            radius,
                            scene,
                        });
                    }
                }
            }
            Ok(cases)
        }
    }
}

/// One simulated episode, as written to the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub scene_id: String,
    pub algorithm: Algorithm,
    pub density: f64,
    pub radius: f64,
    pub gamma: f64,
    pub delta: f64,
    pub truth_seed: u64,
    pub path_length_m: f64,
    pub stops: usize,
    pub energy: f64,
    pub replans: usize,
    pub completed: bool,
}

/// Mean and standard error of the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len() as f64;
        if v.is_empty() {
            return Stat {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / n;
        let stderr = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Stat { mean, stderr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub group: String,
    pub algorithm: Algorithm,
    pub density: f64,
    pub radius: f64,
    pub episodes: usize,
    pub failed: usize,
    pub path_length: Stat,
    pub stops: Stat,
    pub energy: Stat,
    pub replans: Stat,
}

impl Summary {
    fn of(group: String, algorithm: Algorithm, density: f64, radius: f64, rows: &[&EpisodeRow]) -> Summary {
        let ok: Vec<&&EpisodeRow> = rows.iter().filter(|r| r.completed).collect();
        Summary {
            group,
            algorithm,
            density,
            radius,
            episodes: rows.len(),
            failed: rows.len() - ok.len(),
            path_length: Stat::of(ok.iter().map(|r| r.path_length_m)),
            stops: Stat::of(ok.iter().map(|r| r.stops as f64)),
            energy: Stat::of(ok.iter().map(|r| r.energy)),
            replans: Stat::of(ok.iter().map(|r| r.replans as f64)),
        }
    }
}

/// Which parameter the sweep varies, used for grouping and chart axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Density,
    Radius,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Density => "density",
            SweepAxis::Radius => "radius",
        }
    }

    pub fn value(self, row: &EpisodeRow) -> f64 {
        match self {
            SweepAxis::Density => row.density,
            SweepAxis::Radius => row.radius,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResults {
    pub rows: Vec<EpisodeRow>,
    /// Scenes that could not be set up, with the cause.
    pub scene_errors: Vec<(String, String)>,
}

impl ExperimentResults {
    /// The axis with more than one distinct value, density by default.
    pub fn sweep_axis(&self) -> SweepAxis {
        let distinct = |f: fn(&EpisodeRow) -> f64| {
            let mut v: Vec<u64> = self.rows.iter().map(|r| f(r).to_bits()).collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        if distinct(|r| r.density) <= 1 && distinct(|r| r.radius) > 1 {
            SweepAxis::Radius
        } else {
            SweepAxis::Density
        }
    }

    pub fn per_scene(&self) -> Vec<Summary> {
        self.grouped(|r| r.scene_id.clone())
    }

    /// Aggregates over all scenes sharing a sweep value.
    pub fn per_setting(&self, axis: SweepAxis) -> Vec<Summary> {
        let mut out = self.grouped(|r| format!("{}={}", axis.name(), axis.value(r)));
        out.sort_by(|a, b| {
            let key = |s: &Summary| match axis {
                SweepAxis::Density => s.density,
                SweepAxis::Radius => s.radius,
            };
            key(a).total_cmp(&key(b)).then(a.algorithm.cmp(&b.algorithm))
        });
        out
    }

    fn grouped(&self, key: impl Fn(&EpisodeRow) -> String) -> Vec<Summary> {
        let mut order: Vec<(String, Algorithm)> = Vec::new();
        for r in &self.rows {
            let k = (key(r), r.algorithm);
            if !order.contains(&k) {
                order.push(k);
            }
        }
        order
            .into_iter()
            .map(|(group, algorithm)| {
                let rows: Vec<&EpisodeRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.algorithm == algorithm && key(r) == group)
                    .collect();
                let density = rows[0].density;
                let radius = rows[0].radius;
                Summary::of(group, algorithm, density, radius, &rows)
            })
            .collect()
    }
}

fn row(case: &SceneCase, cfg: &RunConfig, algorithm: Algorithm, truth_seed: u64, m: EpisodeMetrics) -> EpisodeRow {
    EpisodeRow {
        scene_id: case.id.clone(),
        algorithm,
        density: case.density,
        radius: case.radius,
        gamma: cfg.gamma,
        delta: cfg.delta,
        truth_seed,
        path_length_m: m.path_length,
        stops: m.stops,
        energy: m.energy,
        replans: m.replans,
        completed: m.completed,
    }
}

/// Truth seeds for a scene: a pure function of the run seed, the scene key,
/// and the draw index.
pub fn truth_seeds(cfg: &RunConfig, case: &SceneCase) -> Vec<u64> {
    (0..cfg.truth_samples)
        .map(|t| seed::derive(cfg.seed, &[TRUTH_STREAM, case.key, t as u64]))
        .collect()
}

/// Runs every configured algorithm on one scene for all truth draws.
/// `inspect` sees each finished episode, for trace audits.
pub fn run_scene(
    case: &SceneCase,
    cfg: &RunConfig,
    inspect: impl FnMut(Algorithm, &GroundTruth, &Episode),
) -> Result<Vec<EpisodeRow>> {
    run_scene_with(case, cfg, |_, _| {}, inspect)
}

/// Like [`run_scene`], also handing every RHTP plan (initial and replanned)
/// to `on_plan` with the scene indices of its PTRM rows.
pub fn run_scene_with(
    case: &SceneCase,
    cfg: &RunConfig,
    mut on_plan: impl FnMut(&PlanOutcome, &[usize]),
    mut inspect: impl FnMut(Algorithm, &GroundTruth, &Episode),
) -> Result<Vec<EpisodeRow>> {
    let planner = cfg.planner(seed::derive(cfg.seed, &[PTRM_STREAM, case.key]));
    let seeds = truth_seeds(cfg, case);
    let truths: Vec<GroundTruth> = seeds.iter().map(|&s| GroundTruth::sample(&case.scene, s)).collect();
    let rhtp = Rhtp::new(&case.scene, &cfg.arm, &planner)?;
    let mut rows = Vec::new();
    for &algorithm in &cfg.algorithms {
        let naive = match algorithm {
            Algorithm::Rhtp => None,
            Algorithm::NaiveCapm => Some(NaiveCapm::with_ptrm(
                &case.scene,
                &cfg.arm,
                cfg.gamma,
                rhtp.initial().ptrm.clone(),
            )?),
        };
        for (truth, &s) in truths.iter().zip(&seeds) {
            let episode = match &naive {
                None => rhtp.run_with(truth, &mut on_plan),
                Some(n) => n.run(truth),
            };
            let metrics = match episode {
                Ok(ep) => {
                    inspect(algorithm, truth, &ep);
                    ep.metrics
                }
                Err(_) => EpisodeMetrics::default(),
            };
            rows.push(row(case, cfg, algorithm, s, metrics));
        }
    }
    Ok(rows)
}

/// Runs the whole experiment on `jobs` worker threads (0 = all cores).
/// Output order follows the scene list, independent of scheduling.
pub fn run_experiment(cfg: &RunConfig, jobs: usize) -> Result<ExperimentResults> {
    cfg.validate()?;
    let cases = collect_scenes(cfg)?;
    if cases.is_empty() {
        return Err(Error::validation("scenes", "no scenes matched"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let per_scene: Vec<std::result::Result<Vec<EpisodeRow>, String>> = pool.install(|| {
        cases
            .par_iter()
            .map(|case| run_scene(case, cfg, |_, _, _| {}).map_err(|e| e.to_string()))
            .collect()
    });
    let mut rows = Vec::new();
    let mut scene_errors = Vec::new();
    for (case, result) in cases.iter().zip(per_scene) {
        match result {
            Ok(r) => rows.extend(r),
            Err(cause) => {
                for &algorithm in &cfg.algorithms {
                    for s in truth_seeds(cfg, case) {
                        rows.push(row(case, cfg, algorithm, s, EpisodeMetrics::default()));
                    }
                }
                scene_errors.push((case.id.clone(), cause));
            }
        }
    }
    Ok(ExperimentResults { rows, scene_errors })
}
