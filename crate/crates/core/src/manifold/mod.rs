//! Optimisation beyond flat space: the Lie-group dissipative leapfrog on SO(n)
//! and dissipative RATTLE for holonomic equality constraints.

pub mod expm;
pub mod lie;
pub mod rattle;

pub use expm::expm;
pub use lie::{lie_group_step, run_lie, ForceMode, LieParams, LieRunConfig, MatrixGroupState, MatrixProblem, TraceLinear};
pub use rattle::{
    project_momentum, rattle_step, run_rattle, ConstraintSet, Constraints, RattleRun, RattleRunConfig, Sphere, Unconstrained,
};
