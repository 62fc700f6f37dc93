//! Multi-block ADMM: a centroidal DDP block, a whole-body DDP block and a
//! projection block, coupled through six consensus/consistency constraints.

mod coupling;
mod penalty;
mod solver;

pub use coupling::{
    adapt_penalty, dual_update, relax, AccelerationConfig, ConstraintId, ConstraintState, CouplingState, PerConstraint,
    Variant,
};
pub use penalty::{AugmentedProblem, CouplingMap, IdentityMap, PenaltyTerm, Support};
pub use solver::{
    check_stopping, compute_residuals, solve_admm, AdmmResult, AdmmSettings, AdmmTrace, Block, IterationRecord,
    Residuals, Snapshot, SplitModel, StopDecision, StoppingCriteria, WarmStart,
};
