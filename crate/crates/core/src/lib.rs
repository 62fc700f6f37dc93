//! Multi-block ADMM trajectory optimization: DDP sub-solvers, projections
//! onto admissible sets, and car and planar walker models.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod ddp;
pub mod error;
pub mod models;
pub mod numdiff;
pub mod projection;
pub mod trajectory;

pub use ddp::{DdpError, DdpProblem, DdpSettings, DdpSolution, DdpStatus};
pub use error::{Error, Result};
pub use numdiff::finite_diff_jacobian;
pub use projection::{AdmissibleSets, ProjectionVars};
pub use trajectory::{rollout, DynamicalSystem, Trajectory};
