//! Geometric integration toolkit.
//!
//! Dissipative (conformal) Hamiltonian optimisers on flat space, Lie groups and
//! constrained manifolds; Hamiltonian Monte Carlo and Langevin samplers; and
//! kernel discrepancies (MMD, kernel Stein discrepancy, score matching) with
//! their information tensors for natural-gradient fitting.
//!
//! Data-parallel inner loops (Gram sums, independent chains, repetitions) go
//! through [`parallel`], which uses rayon when the `parallel` feature is on and
//! falls back to plain iterators otherwise.

pub mod discrepancy;
pub mod error;
pub mod hamiltonian;
pub mod integrators;
pub mod manifold;
pub mod numfmt;
pub mod parallel;
pub mod problems;
pub mod samplers;

pub use error::{Error, Result};
pub use hamiltonian::{
    conformal_vector_field, delta_eta, dissipation_rate, evaluate_hamiltonian, DampingSchedule,
    KineticMetric, PhasePoint, Problem,
};
pub use parallel::Execution;

pub use nalgebra::{DMatrix, DVector};
