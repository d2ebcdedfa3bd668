//! Squared maximum mean discrepancy.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::gram::{cross_sums, mean_var, symmetric_row_sums};
use super::kernel::KernelSpec;
use super::{check_samples, Statistic};
use crate::error::{Error, Result};
use crate::parallel::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdMode {
    /// All pairs including the diagonal; biased but non-negative.
    VStat,
    /// Same-set sums skip the diagonal; unbiased.
    UStat,
}

struct Sums {
    xx_rows: Vec<f64>,
    yy_rows: Vec<f64>,
    xy_rows: Vec<f64>,
    xy_cols: Vec<f64>,
    xx_diag: f64,
    yy_diag: f64,
}

fn gram_sums(x: &[DVector<f64>], y: &[DVector<f64>], k: &KernelSpec, exec: Execution) -> Sums {
    let kf = |a: &DVector<f64>, b: &DVector<f64>| k.eval(a.as_slice(), b.as_slice());
    let xx_rows = symmetric_row_sums(exec, x.len(), |i, j| kf(&x[i], &x[j]));
    let yy_rows = symmetric_row_sums(exec, y.len(), |i, j| kf(&y[i], &y[j]));
    let (xy_rows, xy_cols) = cross_sums(exec, x.len(), y.len(), |i, j| kf(&x[i], &y[j]));
    Sums {
        xx_rows,
        yy_rows,
        xy_rows,
        xy_cols,
        xx_diag: x.iter().map(|a| kf(a, a)).sum(),
        yy_diag: y.iter().map(|b| kf(b, b)).sum(),
    }
}

fn check_pair(x: &[DVector<f64>], y: &[DVector<f64>], min: usize) -> Result<()> {
    let dx = check_samples(x, min)?;
    let dy = check_samples(y, min)?;
    if dx != dy {
        return Err(Error::DimensionMismatch { expected: dx, got: dy });
    }
    Ok(())
}

/// `MMD²` between the empirical measures of `x` and `y`. The V-statistic is
/// clamped at zero, which only ever removes rounding noise.
pub fn mmd_squared(
    x: &[DVector<f64>],
    y: &[DVector<f64>],
    k: &KernelSpec,
    mode: MmdMode,
    exec: Execution,
) -> Result<f64> {
    k.validate()?;
    match mode {
        MmdMode::VStat => {
            check_pair(x, y, 1)?;
            let s = gram_sums(x, y, k, exec);
            let (n, m) = (x.len() as f64, y.len() as f64);
            let xx = (s.xx_rows.iter().sum::<f64>() + s.xx_diag) / (n * n);
            let yy = (s.yy_rows.iter().sum::<f64>() + s.yy_diag) / (m * m);
            let xy = s.xy_rows.iter().sum::<f64>() / (n * m);
            Ok((xx + yy - 2.0 * xy).max(0.0))
        }
        MmdMode::UStat => Ok(mmd_u_statistic(x, y, k, exec)?.value),
    }
}

/// Unbiased `MMD²` with the standard error of its linear (Hájek) projection,
/// `sqrt(4 var(h_x)/n + 4 var(h_y)/m)`.
pub fn mmd_u_statistic(x: &[DVector<f64>], y: &[DVector<f64>], k: &KernelSpec, exec: Execution) -> Result<Statistic> {
    k.validate()?;
    check_pair(x, y, 2)?;
    let s = gram_sums(x, y, k, exec);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let value = s.xx_rows.iter().sum::<f64>() / (n * (n - 1.0)) + s.yy_rows.iter().sum::<f64>() / (m * (m - 1.0))
        - 2.0 * s.xy_rows.iter().sum::<f64>() / (n * m);
    let hx: Vec<f64> = s.xx_rows.iter().zip(&s.xy_rows).map(|(a, b)| a / (n - 1.0) - b / m).collect();
    let hy: Vec<f64> = s.yy_rows.iter().zip(&s.xy_cols).map(|(a, b)| a / (m - 1.0) - b / n).collect();
    let stderr = (4.0 * mean_var(&hx).1 / n + 4.0 * mean_var(&hy).1 / m).sqrt();
    if !value.is_finite() {
        return Err(Error::NumericOverflow { term: "MMD statistic" });
    }
    Ok(Statistic { value, stderr, n: x.len() + y.len() })
}
