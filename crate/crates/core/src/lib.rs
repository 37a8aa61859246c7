//! Base-stop planning for a mobile manipulator that must observe each target
//! before manipulating it, under uncertainty about where on the target the
//! manipulation has to happen.
//!
//! The pipeline builds a probabilistic reachability map over base poses,
//! partitions its support into regions of equal target signature, selects
//! and orders regions with an exact branch-and-bound, and executes the
//! resulting plan with replanning.

pub mod error;
pub mod executor;
pub mod experiment;
pub mod geometry;
pub mod partition;
pub mod planner;
pub mod reachability;
pub mod report;
pub mod scene;
pub mod seed;

pub use error::{Error, Result};
pub use executor::{energy_cost, naive_capm_episode, simulate_episode, Episode, EpisodeMetrics, GroundTruth};
pub use geometry::{Annulus, Point2, Rect};
pub use partition::{compute_partition, Partition, PartitionSet};
pub use planner::{coverage_probability, plan_scene, Plan, PlannerConfig};
pub use reachability::{build_ptrm, reach_probability, Ptrm};
pub use scene::{generate_scene, load_scene, save_scene, ArmParams, BeliefState, Scene, Troi};
