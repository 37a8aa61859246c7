//! Targets, beliefs over their manipulation points, and planning scenes.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Rect};
use crate::seed;

/// Target region of interest: a ground disk believed to contain the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Troi {
    pub id: usize,
    pub center: Point2,
    pub radius: f64,
}

impl Troi {
    pub fn contains(&self, p: Point2) -> bool {
        self.center.dist_sq(p) <= self.radius * self.radius
    }
}

/// Symmetric 2x2 covariance in m².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn isotropic(variance: f64) -> Self {
        Self {
            xx: variance,
            xy: 0.0,
            yy: variance,
        }
    }

    pub fn is_spd(&self) -> bool {
        let det = self.xx * self.yy - self.xy * self.xy;
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite() && self.xx > 0.0 && det > 0.0
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`, as `(l11, l21, l22)`.
    fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let l22 = (self.yy - l21 * l21).sqrt();
        (l11, l21, l22)
    }

    fn to_rows(self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }
}

/// Bivariate normal conditioned on `|X - center| <= radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedNormal {
    pub mean: Point2,
    pub cov: Cov2,
    /// Center of the truncation disk (the TROI center).
    pub center: Point2,
    pub radius: f64,
}

impl TruncatedNormal {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        let (l11, l21, l22) = self.cov.cholesky();
        let r2 = self.radius * self.radius;
        loop {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let p = Point2::new(self.mean.x + l11 * z1, self.mean.y + l21 * z1 + l22 * z2);
            if p.dist_sq(self.center) <= r2 {
                return p;
            }
        }
    }
}

/// What is known about a target's manipulation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BeliefState {
    Truncated(TruncatedNormal),
    Collapsed(Point2),
}

impl BeliefState {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        match self {
            BeliefState::Truncated(t) => t.sample(rng),
            BeliefState::Collapsed(p) => *p,
        }
    }

    pub fn is_collapsed(&self) -> bool {
        matches!(self, BeliefState::Collapsed(_))
    }
}

/// Draws one manipulation point from `belief`, deterministically in `seed`.
pub fn sample_mpoi(belief: &BeliefState, seed: u64) -> Point2 {
    belief.sample(&mut seed::rng(seed))
}

/// Radii of the base annuli from which the arm can manipulate a point and
/// observe a TROI. These are configuration; the defaults only satisfy the
/// containment condition for TROI radii up to 0.15 m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmParams {
    pub manip_r_min: f64,
    pub manip_r_max: f64,
    pub obs_r_min: f64,
    pub obs_r_max: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            manip_r_min: 0.3,
            manip_r_max: 0.7,
            obs_r_min: 0.1,
            obs_r_max: 0.9,
        }
    }
}

impl ArmParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi;
        if !ok(self.manip_r_min, self.manip_r_max) {
            return Err(Error::validation(
                "arm.manip_r_min/manip_r_max",
                "need 0 <= manip_r_min < manip_r_max",
            ));
        }
        if !ok(self.obs_r_min, self.obs_r_max) {
            return Err(Error::validation(
                "arm.obs_r_min/obs_r_max",
                "need 0 <= obs_r_min < obs_r_max",
            ));
        }
        Ok(())
    }
}

/// One planning instance: targets with their beliefs plus start and goal poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    workspace: Rect,
    start: Point2,
    goal: Point2,
    targets: Vec<Troi>,
    beliefs: Vec<BeliefState>,
}

impl Scene {
    pub fn new(
        workspace: Rect,
        start: Point2,
        goal: Point2,
        targets: Vec<Troi>,
        beliefs: Vec<BeliefState>,
    ) -> Result<Self> {
        let scene = Self {
            workspace,
            start,
            goal,
            targets,
            beliefs,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<()> {
        let ws = &self.workspace;
        if !(ws.min.is_finite() && ws.max.is_finite() && ws.width() > 0.0 && ws.height() > 0.0) {
            return Err(Error::validation("workspace", "need min < max on both axes"));
        }
        if self.targets.is_empty() {
            return Err(Error::validation("targets", "scene has no targets"));
        }
        if self.targets.len() != self.beliefs.len() {
            return Err(Error::validation(
                "beliefs",
                format!("{} beliefs for {} targets", self.beliefs.len(), self.targets.len()),
            ));
        }
        if !ws.contains(self.start) {
            return Err(Error::validation("start", "outside the workspace"));
        }
        if !ws.contains(self.goal) {
            return Err(Error::validation("goal", "outside the workspace"));
        }
        let mut ids = HashSet::new();
        for (k, (t, b)) in self.targets.iter().zip(&self.beliefs).enumerate() {
            let field = |f: &str| format!("targets[{k}].{f}");
            if !ids.insert(t.id) {
                return Err(Error::validation(field("id"), format!("duplicate id {}", t.id)));
            }
            if !(t.radius.is_finite() && t.radius > 0.0) {
                return Err(Error::validation(field("radius"), "must be positive"));
            }
            if !t.center.is_finite() || !ws.contains_disk(t.center, t.radius) {
                return Err(Error::validation(field("center"), "TROI disk leaves the workspace"));
            }
            match b {
                BeliefState::Truncated(tn) => {
                    if !tn.cov.is_spd() {
                        return Err(Error::validation(field("belief.cov"), "not symmetric positive-definite"));
                    }
                    if !tn.mean.is_finite() || !t.contains(tn.mean) {
                        return Err(Error::validation(field("belief.mean"), "outside the TROI"));
                    }
                    if tn.center != t.center || tn.radius != t.radius {
                        return Err(Error::validation(field("belief"), "truncation disk differs from the TROI"));
                    }
                }
                BeliefState::Collapsed(p) => {
                    if !p.is_finite() || !t.contains(*p) {
                        return Err(Error::validation(field("belief.point"), "outside the TROI"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn workspace(&self) -> Rect {
        self.workspace
    }

    pub fn start(&self) -> Point2 {
        self.start
    }

    pub fn goal(&self) -> Point2 {
        self.goal
    }

    pub fn targets(&self) -> &[Troi] {
        &self.targets
    }

    pub fn beliefs(&self) -> &[BeliefState] {
        &self.beliefs
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Targets per square meter of workspace.
    pub fn density(&self) -> f64 {
        self.targets.len() as f64 / self.workspace.area()
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            workspace: self.workspace,
            start: self.start,
            goal: self.goal,
            targets: self
                .targets
                .iter()
                .zip(&self.beliefs)
                .map(|(t, b)| TargetFile {
                    id: t.id,
                    center: t.center,
                    radius: t.radius,
                    belief: match b {
                        BeliefState::Truncated(tn) => BeliefFile::Truncated {
                            mean: tn.mean,
                            cov: tn.cov.to_rows(),
                        },
                        BeliefState::Collapsed(p) => BeliefFile::Collapsed { point: *p },
                    },
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("scene serialization is infallible")
    }

    pub fn from_json(text: &str) -> std::result::Result<Result<Self>, serde_json::Error> {
        let file: SceneFile = serde_json::from_str(text)?;
        Ok(file.into_scene())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    workspace: Rect,
    start: Point2,
    goal: Point2,
    targets: Vec<TargetFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    id: usize,
    center: Point2,
    radius: f64,
    belief: BeliefFile,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum BeliefFile {
    Truncated { mean: Point2, cov: [[f64; 2]; 2] },
    Collapsed { point: Point2 },
}

impl SceneFile {
    fn into_scene(self) -> Result<Scene> {
        let mut targets = Vec::with_capacity(self.targets.len());
        let mut beliefs = Vec::with_capacity(self.targets.len());
        for (k, t) in self.targets.into_iter().enumerate() {
            let troi = Troi {
                id: t.id,
                center: t.center,
                radius: t.radius,
            };
            let belief = match t.belief {
                BeliefFile::Truncated { mean, cov } => {
                    if cov[0][1] != cov[1][0] {
                        return Err(Error::validation(
                            format!("targets[{k}].belief.cov"),
                            "not symmetric positive-definite",
                        ));
                    }
                    BeliefState::Truncated(TruncatedNormal {
                        mean,
                        cov: Cov2 {
                            xx: cov[0][0],
                            xy: cov[0][1],
                            yy: cov[1][1],
                        },
                        center: troi.center,
                        radius: troi.radius,
                    })
                }
                BeliefFile::Collapsed { point } => BeliefState::Collapsed(point),
            };
            targets.push(troi);
            beliefs.push(belief);
        }
        Scene::new(self.workspace, self.start, self.goal, targets, beliefs)
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scene::from_json(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    crate::report::write_atomic(path.as_ref(), scene.to_json().as_bytes())
}

/// Uniformly places `floor(density * area)` TROIs of the given radius fully
/// inside the workspace, with isotropic priors `Σ = radius · I`.
pub fn generate_scene(density: f64, workspace: Rect, radius: f64, seed: u64) -> Result<Scene> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::validation("density", "must be positive"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::validation("radius", "must be positive"));
    }
    if !(workspace.width() > 0.0 && workspace.height() > 0.0) {
        return Err(Error::validation("workspace", "area must be positive"));
    }
    // The epsilon keeps e.g. 7 * 1.0 from flooring to 6 after rounding.
    let count = (density * workspace.area() + 1e-9).floor() as usize;
    if count == 0 {
        return Err(Error::validation("density", "yields no targets for this workspace"));
    }
    let span_x = workspace.width() - 2.0 * radius;
    let span_y = workspace.height() - 2.0 * radius;
    if span_x < 0.0 || span_y < 0.0 {
        return Err(Error::Packing { count, radius });
    }

    let mut rng = seed::rng(seed::derive(seed, &[0x5CE7E]));
    let cov = Cov2::isotropic(radius);
    let mut targets = Vec::with_capacity(count);
    let mut beliefs = Vec::with_capacity(count);
    for id in 0..count {
        let center = Point2::new(
            workspace.min.x + radius + rng.random::<f64>() * span_x,
            workspace.min.y + radius + rng.random::<f64>() * span_y,
        );
        targets.push(Troi { id, center, radius });
        beliefs.push(BeliefState::Truncated(TruncatedNormal {
            mean: center,
            cov,
            center,
            radius,
        }));
    }

    let (start, goal) = if workspace.width() >= workspace.height() {
        let cx = 0.5 * (workspace.min.x + workspace.max.x);
        (Point2::new(cx, workspace.min.y), Point2::new(cx, workspace.max.y))
    } else {
        let cy = 0.5 * (workspace.min.y + workspace.max.y);
        (Point2::new(workspace.min.x, cy), Point2::new(workspace.max.x, cy))
    };
    Scene::new(workspace, start, goal, targets, beliefs)
}
