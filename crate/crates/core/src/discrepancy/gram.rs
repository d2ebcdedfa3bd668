//! Tiled pair sums with a reduction order fixed by the tile layout, so the
//! result is identical whether tiles run on one thread or many.

use crate::parallel::{map_indexed, Execution};

const TILE: usize = 128;

fn blocks(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(TILE).map(|s| (s, (s + TILE).min(n))).collect()
}

/// `r_i = Σ_{j≠i} f(i, j)` for a symmetric `f`, evaluating each unordered pair once.
pub(crate) fn symmetric_row_sums<F>(exec: Execution, n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let bl = blocks(n);
    let tiles: Vec<(usize, usize)> = (0..bl.len()).flat_map(|a| (a..bl.len()).map(move |b| (a, b))).collect();
    let parts = map_indexed(exec, tiles.len(), |t| {
        let (a, b) = tiles[t];
        let (ra, rb) = (bl[a], bl[b]);
        let mut rows = vec![0.0; ra.1 - ra.0];
        let mut cols = vec![0.0; rb.1 - rb.0];
        for i in ra.0..ra.1 {
            let start = if a == b { i + 1 } else { rb.0 };
            for j in start..rb.1 {
                let v = f(i, j);
                rows[i - ra.0] += v;
                cols[j - rb.0] += v;
            }
        }
        (rows, cols)
    });
    let mut sums = vec![0.0; n];
    for (t, (rows, cols)) in parts.into_iter().enumerate() {
        let (a, b) = tiles[t];
        for (k, v) in rows.into_iter().enumerate() {
            sums[bl[a].0 + k] += v;
        }
        for (k, v) in cols.into_iter().enumerate() {
            sums[bl[b].0 + k] += v;
        }
    }
    sums
}

/// Row and column sums of the `n×m` matrix `f(i, j)`.
pub(crate) fn cross_sums<F>(exec: Execution, n: usize, m: usize, f: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let (bn, bm) = (blocks(n), blocks(m));
    let tiles: Vec<(usize, usize)> = (0..bn.len()).flat_map(|a| (0..bm.len()).map(move |b| (a, b))).collect();
    let parts = map_indexed(exec, tiles.len(), |t| {
        let (a, b) = tiles[t];
        let (ra, rb) = (bn[a], bm[b]);
        let mut rows = vec![0.0; ra.1 - ra.0];
        let mut cols = vec![0.0; rb.1 - rb.0];
        for i in ra.0..ra.1 {
            for j in rb.0..rb.1 {
                let v = f(i, j);
                rows[i - ra.0] += v;
                cols[j - rb.0] += v;
            }
        }
        (rows, cols)
    });
    let mut row_sums = vec![0.0; n];
    let mut col_sums = vec![0.0; m];
    for (t, (rows, cols)) in parts.into_iter().enumerate() {
        let (a, b) = tiles[t];
        for (k, v) in rows.into_iter().enumerate() {
            row_sums[bn[a].0 + k] += v;
        }
        for (k, v) in cols.into_iter().enumerate() {
            col_sums[bm[b].0 + k] += v;
        }
    }
    (row_sums, col_sums)
}

/// Sample mean and variance (denominator `n − 1`).
pub(crate) fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
