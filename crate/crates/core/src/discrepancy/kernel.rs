//! Radial scalar kernels and the median bandwidth heuristic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::RngStream;

/// Kernels of the form `k(x, y) = φ(‖x − y‖²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(−‖x−y‖² / (2σ²))`.
    Gaussian { bandwidth: f64 },
    /// `(c² + ‖x−y‖²)^{−β}`.
    InverseMultiquadric { c: f64, beta: f64 },
}

/// `‖x − y‖²` without allocating.
#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn imq(c: f64, beta: f64) -> Result<Self> {
        let k = KernelSpec::InverseMultiquadric { c, beta };
        k.validate()?;
        Ok(k)
    }

    /// Gaussian kernel with `σ² = median_heuristic(samples)`.
    pub fn gaussian_median(samples: &[DVector<f64>]) -> Result<Self> {
        Self::gaussian(median_heuristic(samples)?.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth } if bandwidth > 0.0 && bandwidth.is_finite() => Ok(()),
            KernelSpec::Gaussian { bandwidth } => {
                Err(Error::InvalidConfig(format!("Gaussian bandwidth must be positive, got {bandwidth}")))
            }
            KernelSpec::InverseMultiquadric { c, beta } => {
                if !(c > 0.0 && c.is_finite()) || !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "inverse multiquadric needs c > 0 and beta in (0, 1), got c={c}, beta={beta}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// `(φ, φ', φ'')` at `r² = ‖x−y‖²`.
    #[inline]
    pub(crate) fn radial(&self, r2: f64) -> (f64, f64, f64) {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let s2 = bandwidth * bandwidth;
                let phi = (-0.5 * r2 / s2).exp();
                (phi, -0.5 * phi / s2, 0.25 * phi / (s2 * s2))
            }
            KernelSpec::InverseMultiquadric { c, beta } => {
                let u = c * c + r2;
                let phi = u.powf(-beta);
                (phi, -beta * phi / u, beta * (beta + 1.0) * phi / (u * u))
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.radial(sq_dist(x, y)).0
    }

    /// `∂ₓk(x, y) = 2φ'(r²)(x − y)`.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> DVector<f64> {
        let (_, d1, _) = self.radial(sq_dist(x, y));
        DVector::from_iterator(x.len(), x.iter().zip(y).map(|(a, b)| 2.0 * d1 * (a - b)))
    }

    /// `∂_y k(x, y) = −∂ₓk(x, y)`.
    pub fn grad_y(&self, x: &[f64], y: &[f64]) -> DVector<f64> {
        -self.grad_x(x, y)
    }

    /// `∂ₓ·∂_y k = Σ_a ∂_{x_a}∂_{y_a} k = −2dφ' − 4r²φ''`.
    pub fn trace_mixed(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2 = sq_dist(x, y);
        let (_, d1, d2) = self.radial(r2);
        -2.0 * x.len() as f64 * d1 - 4.0 * r2 * d2
    }

    /// `H_ab = ∂_{x_a}∂_{y_b} k = −2φ'δ_ab − 4φ''(x−y)_a(x−y)_b`.
    pub fn mixed_hessian(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let (_, d1, d2) = self.radial(sq_dist(x, y));
        DMatrix::from_fn(d, d, |a, b| {
            let diag = if a == b { -2.0 * d1 } else { 0.0 };
            diag - 4.0 * d2 * (x[a] - y[a]) * (x[b] - y[b])
        })
    }

    pub fn gram(&self, xs: &[DVector<f64>]) -> DMatrix<f64> {
        let n = xs.len();
        DMatrix::from_fn(n, n, |i, j| self.eval(xs[i].as_slice(), xs[j].as_slice()))
    }
}

/// Exact up to this many points; larger sets are subsampled with a fixed seed.
pub const MEDIAN_EXACT_LIMIT: usize = 2000;
const MEDIAN_SEED: u64 = 0x6d65_6469_616e;

pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (lower, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Squared bandwidth `σ²`: the median of squared distances over pairs of
/// distinct indices. Above [`MEDIAN_EXACT_LIMIT`] points a fixed-seed subsample
/// of that size is used.
pub fn median_heuristic(samples: &[DVector<f64>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: samples.len() });
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let chosen: Vec<&DVector<f64>> = if samples.len() <= MEDIAN_EXACT_LIMIT {
        samples.iter().collect()
    } else {
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        let mut rng = RngStream::new(MEDIAN_SEED);
        for i in 0..MEDIAN_EXACT_LIMIT {
            let j = rng.int_inclusive(i, idx.len() - 1);
            idx.swap(i, j);
        }
        idx[..MEDIAN_EXACT_LIMIT].iter().map(|&i| &samples[i]).collect()
    };
    let n = chosen.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(chosen[i].as_slice(), chosen[j].as_slice()));
        }
    }
    if dists.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample coordinates".into()));
    }
    let med = median_in_place(&mut dists);
    if med <= 0.0 {
        return Err(Error::DegenerateSample(
            "median squared distance is zero (identical points)".into(),
        ));
    }
    Ok(med)
}
