//! Ergodic averages with batch-means standard errors.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean of `values` and the batch-means standard error using `⌊√n⌋`
/// equal batches. Trailing samples that do not fill a batch still count
/// toward the mean.
pub fn batch_means(values: &[f64]) -> Result<Estimate> {
    let n = values.len();
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_SAMPLES, got: n });
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sample value {bad}")));
    }
    // Shift by the first value: exact for constant input and kinder to rounding.
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n as f64;

    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches;
    let batch_means: Vec<f64> = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| shift + c.iter().map(|v| v - shift).sum::<f64>() / size as f64)
        .collect();
    let grand = shift + batch_means.iter().map(|m| m - shift).sum::<f64>() / batches as f64;
    let var = batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok(Estimate { mean, stderr: (var / batches as f64).sqrt() })
}

/// `(1/n) Σ f(x_k)` with its batch-means standard error.
pub fn mcmc_estimate<F>(samples: &[DVector<f64>], f: F) -> Result<Estimate>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let values: Vec<f64> = samples.iter().map(f).collect();
    batch_means(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::RngStream;

    #[test]
    fn constant_function() {
        let samples = vec![DVector::from_element(2, 1.0); 250];
        let e = mcmc_estimate(&samples, |_| 0.1).unwrap();
        assert_eq!(e, Estimate { mean: 0.1, stderr: 0.0 });
    }

    #[test]
    fn too_few_samples() {
        let samples = vec![DVector::zeros(1); 99];
        assert!(matches!(
            mcmc_estimate(&samples, |x| x[0]),
            Err(Error::InsufficientSamples { needed: 100, got: 99 })
        ));
    }

    #[test]
    fn iid_normal_coverage() {
        // CLT oracle: |mean| ≤ 4·stderr in at least 99% of repetitions.
        let root = RngStream::new(12);
        let mut covered = 0;
        let reps = 400;
        for r in 0..reps {
            let mut rng = root.split(r);
            let samples: Vec<_> = (0..2500).map(|_| rng.normal_vec(1)).collect();
            let e = mcmc_estimate(&samples, |x| x[0]).unwrap();
            if e.mean.abs() <= 4.0 * e.stderr {
                covered += 1;
            }
            if r == 0 {
                let sq = mcmc_estimate(&samples, |x| x[0] * x[0]).unwrap();
                assert!((sq.mean - 1.0).abs() < 0.1);
            }
        }
        assert!(covered as f64 >= 0.99 * reps as f64, "covered {covered}/{reps}");
    }

    #[test]
    fn batch_stderr_sees_autocorrelation() {
        // AR(1) with φ = 0.9: the true stderr is sqrt((1+φ)/(1−φ)) ≈ 4.4 times the naive one.
        let mut rng = RngStream::new(5);
        let mut x = 0.0;
        let values: Vec<f64> = (0..40_000)
            .map(|_| {
                x = 0.9 * x + rng.normal();
                x
            })
            .collect();
        let e = batch_means(&values).unwrap();
        let var = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
        let naive = (var / values.len() as f64).sqrt();
        let ratio = e.stderr / naive;
        assert!((2.5..7.0).contains(&ratio), "ratio {ratio}");
    }
}
