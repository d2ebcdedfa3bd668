//! Stein reproducing kernel and the kernel Stein discrepancy U-statistic.

use nalgebra::{DMatrix, DVector};

use super::gram::{mean_var, symmetric_row_sums};
use super::kernel::{sq_dist, KernelSpec};
use super::{check_samples, Statistic};
use crate::error::{check_dim, Error, Result};
use crate::parallel::{map_indexed, Execution};

/// Stein kernel for `K = k·M` given the scores at both points, in the
/// expanded form
/// `Σ_ab M_ab (∂_{x_a}∂_{y_b}k + s_a(x)∂_{y_b}k + s_b(y)∂_{x_a}k + k s_a(x)s_b(y))`.
/// `m = None` means `M = I`.
pub fn stein_kernel_with_scores(
    k: &KernelSpec,
    x: &[f64],
    y: &[f64],
    sx: &[f64],
    sy: &[f64],
    m: Option<&DMatrix<f64>>,
) -> f64 {
    let r2 = sq_dist(x, y);
    let (phi, d1, d2) = k.radial(r2);
    match m {
        None => {
            let d = x.len() as f64;
            let mut sx_z = 0.0;
            let mut sy_z = 0.0;
            let mut sx_sy = 0.0;
            for a in 0..x.len() {
                let z = x[a] - y[a];
                sx_z += sx[a] * z;
                sy_z += sy[a] * z;
                sx_sy += sx[a] * sy[a];
            }
            // ∂ₓk = 2φ'z, ∂_y k = −2φ'z
            (-2.0 * d * d1 - 4.0 * r2 * d2) - 2.0 * d1 * sx_z + 2.0 * d1 * sy_z + phi * sx_sy
        }
        Some(m) => {
            let n = x.len();
            let z = DVector::from_fn(n, |a, _| x[a] - y[a]);
            let sx = DVector::from_column_slice(sx);
            let sy = DVector::from_column_slice(sy);
            let mz = m * &z;
            let mt_z = m.transpose() * &z;
            -2.0 * d1 * m.trace() - 4.0 * d2 * z.dot(&mz) - 2.0 * d1 * sx.dot(&mz) + 2.0 * d1 * mt_z.dot(&sy)
                + phi * sx.dot(&(m * &sy))
        }
    }
}

/// `k_μ(x, y)` for a target with score `s = ∇ log p`.
pub fn stein_kernel<S>(x: &DVector<f64>, y: &DVector<f64>, score: S, k: &KernelSpec) -> Result<f64>
where
    S: Fn(&DVector<f64>) -> DVector<f64>,
{
    check_dim(x.len(), y.len())?;
    let sx = score(x);
    let sy = score(y);
    check_dim(x.len(), sx.len())?;
    if !(sx.iter().chain(sy.iter()).all(|v| v.is_finite())) {
        return Err(Error::NonFinite("score".into()));
    }
    let v = stein_kernel_with_scores(k, x.as_slice(), y.as_slice(), sx.as_slice(), sy.as_slice(), None);
    if !v.is_finite() {
        return Err(Error::NumericOverflow { term: "stein kernel" });
    }
    Ok(v)
}

/// `(1/(m(m−1))) Σ_{i≠j} k_μ(x_i, x_j)` with the projection standard error
/// `sqrt(4 var(h)/m)`, `h_i = (1/(m−1)) Σ_{j≠i} k_μ(x_i, x_j)`.
pub fn ksd_u_statistic<S>(xs: &[DVector<f64>], score: S, k: &KernelSpec, exec: Execution) -> Result<Statistic>
where
    S: Fn(&DVector<f64>) -> DVector<f64> + Sync + Send,
{
    ksd_u_statistic_preconditioned(xs, score, k, None, exec)
}

/// As [`ksd_u_statistic`] with the matrix kernel `K = B k Bᵀ` for a constant `B`.
pub fn ksd_u_statistic_preconditioned<S>(
    xs: &[DVector<f64>],
    score: S,
    k: &KernelSpec,
    b: Option<&DMatrix<f64>>,
    exec: Execution,
) -> Result<Statistic>
where
    S: Fn(&DVector<f64>) -> DVector<f64> + Sync + Send,
{
    k.validate()?;
    let d = check_samples(xs, 2)?;
    let m = b.map(|b| b * b.transpose());
    if let Some(m) = &m {
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, got: m.nrows() });
        }
    }
    let scores = map_indexed(exec, xs.len(), |i| score(&xs[i]));
    for s in &scores {
        check_dim(d, s.len())?;
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("score".into()));
        }
    }
    let rows = symmetric_row_sums(exec, xs.len(), |i, j| {
        stein_kernel_with_scores(k, xs[i].as_slice(), xs[j].as_slice(), scores[i].as_slice(), scores[j].as_slice(), m.as_ref())
    });
    let n = xs.len() as f64;
    let value = rows.iter().sum::<f64>() / (n * (n - 1.0));
    if !value.is_finite() {
        return Err(Error::NumericOverflow { term: "KSD statistic" });
    }
    let h: Vec<f64> = rows.iter().map(|r| r / (n - 1.0)).collect();
    let stderr = (4.0 * mean_var(&h).1 / n).sqrt();
    Ok(Statistic { value, stderr, n: xs.len() })
}

/// Dense `m×m` Stein-kernel Gram matrix.
pub fn stein_gram<S>(xs: &[DVector<f64>], score: S, k: &KernelSpec) -> Result<DMatrix<f64>>
where
    S: Fn(&DVector<f64>) -> DVector<f64>,
{
    check_samples(xs, 1)?;
    let scores: Vec<DVector<f64>> = xs.iter().map(&score).collect();
    Ok(DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
        stein_kernel_with_scores(k, xs[i].as_slice(), xs[j].as_slice(), scores[i].as_slice(), scores[j].as_slice(), None)
    }))
}
