//! MCMC and Langevin samplers.

mod chain;
mod estimate;
mod hmc;
mod langevin;
mod output;
mod recipe;
mod rng;

pub use chain::{pooled_moments, run_chains, ChainRun, ChainState, ChainsConfig, MomentRow, SampleRow, Sampler};
pub use estimate::{batch_means, mcmc_estimate, Estimate, MIN_SAMPLES};
pub use hmc::{
    hmc_draw, hmc_draw_with, leapfrog_trajectory, three_stage_trajectory, Draw, HmcParams, Integrator,
    THREE_STAGE_A, THREE_STAGE_B,
};
pub use langevin::{overdamped_em_step, underdamped_step};
pub use output::{read_samples_csv, write_samples_csv, SampleFile};
pub use recipe::{
    complete_recipe_drift, complete_recipe_em_step, DiffusionSpec, DivergenceMode, MatrixField, VectorField,
    PSD_TOL, SYMMETRY_TOL,
};
pub use rng::RngStream;
