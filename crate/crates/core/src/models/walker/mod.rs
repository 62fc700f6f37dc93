//! Planar kneed compass-gait walker: whole-body rigid-contact dynamics, a
//! centroidal model, coupling maps, terrain and multi-step walking.

pub mod centroidal;
pub mod dynamics;
pub mod gait;
pub mod kinematics;
pub mod problem;
pub mod terrain;

pub use centroidal::{CentroidalDynamics, CentroidalProblem, CentroidalWeights};
pub use dynamics::{ContactSolution, WalkerDynamics};
pub use gait::{
    default_walker_settings, run_walking, run_walking_with, StepHook, StepOutcome, WalkerScenario, WalkingRun,
};
pub use kinematics::{WalkerModel, WalkerParams};
pub use problem::{WalkerLimits, WalkerSplit, WholeBodyProblem, WholeBodyWeights};
pub use terrain::{FootstepPlan, Terrain};
