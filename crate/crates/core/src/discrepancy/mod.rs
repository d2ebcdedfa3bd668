//! Kernel discrepancies, score matching and their information tensors.

mod gram;
mod information;
mod kernel;
mod mmd;
mod score;
mod stein;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use information::{
    default_ridge, ksd_information, mmd_information, natural_gradient_step, sm_information, Generator,
    InformationKind, InformationTensor, TranslationGenerator, MIN_MC_SAMPLES,
};
pub use kernel::{median_heuristic, KernelSpec, MEDIAN_EXACT_LIMIT};
pub use mmd::{mmd_squared, mmd_u_statistic, MmdMode};
pub use score::{sm_estimate, sm_gradient, GaussianLocation, ScoreModel, SmOptions};
pub use stein::{ksd_u_statistic, ksd_u_statistic_preconditioned, stein_gram, stein_kernel, stein_kernel_with_scores};

/// A point estimate with its standard error and the number of samples behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Checks count, shape and finiteness; returns the common dimension.
pub(crate) fn check_samples(xs: &[DVector<f64>], min: usize) -> Result<usize> {
    if xs.len() < min || xs.is_empty() {
        return Err(Error::InsufficientSamples { needed: min.max(1), got: xs.len() });
    }
    let d = xs[0].len();
    for (i, x) in xs.iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i}")));
        }
    }
    Ok(d)
}
