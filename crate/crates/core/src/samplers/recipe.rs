//! Euclidean complete recipe: target-preserving diffusions built from a
//! symmetric PSD field `S` and an antisymmetric field `A`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::rng::RngStream;
use crate::error::{check_dim, Error, Result};
use crate::hamiltonian::Problem;

pub type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-12;

#[derive(Clone)]
pub enum DivergenceMode {
    /// User-supplied row-wise divergence of `A + S`.
    Analytic(VectorField),
    /// Central differences with step `h`.
    FiniteDifference { h: f64 },
}

#[derive(Clone)]
pub struct DiffusionSpec {
    dim: usize,
    s: MatrixField,
    a: MatrixField,
    divergence: DivergenceMode,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.divergence {
            DivergenceMode::Analytic(_) => "analytic".to_string(),
            DivergenceMode::FiniteDifference { h } => format!("finite_difference(h={h})"),
        };
        f.debug_struct("DiffusionSpec").field("dim", &self.dim).field("divergence", &mode).finish()
    }
}

impl DiffusionSpec {
    pub fn new(dim: usize, s: MatrixField, a: MatrixField, divergence: DivergenceMode) -> Result<Self> {
        if let DivergenceMode::FiniteDifference { h } = divergence {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
            }
        }
        Ok(Self { dim, s, a, divergence })
    }

    /// Constant fields; the divergence vanishes identically.
    pub fn constant(s: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        let dim = s.nrows();
        if !s.is_square() || a.shape() != s.shape() {
            return Err(Error::Spec("S and A must be square matrices of the same size".into()));
        }
        let spec = Self::new(
            dim,
            Arc::new(move |_| s.clone()),
            Arc::new(move |_| a.clone()),
            DivergenceMode::Analytic(Arc::new(move |_| DVector::zeros(dim))),
        )?;
        spec.validate_at(&DVector::zeros(dim))?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn s_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.s)(x)
    }

    pub fn a_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.a)(x)
    }

    /// Checks symmetry of `S`, antisymmetry of `A` and `S ⪰ 0` at `x`.
    pub fn validate_at(&self, x: &DVector<f64>) -> Result<()> {
        check_dim(self.dim, x.len())?;
        let s = self.s_at(x);
        let a = self.a_at(x);
        if s.shape() != (self.dim, self.dim) || a.shape() != (self.dim, self.dim) {
            return Err(Error::Spec(format!("S and A must be {0}x{0}", self.dim)));
        }
        let asym = (&s - s.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::Spec(format!("S is not symmetric (defect {asym:.3e})")));
        }
        let sym = (&a + a.transpose()).amax();
        if sym > SYMMETRY_TOL {
            return Err(Error::Spec(format!("A is not antisymmetric (defect {sym:.3e})")));
        }
        let min_eig = s.symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL {
            return Err(Error::Spec(format!("S is not positive semidefinite (eigenvalue {min_eig:.3e})")));
        }
        Ok(())
    }

    /// `(∂·(A+S))_i = Σ_j ∂_j (A+S)_ij`.
    pub fn divergence_at(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.divergence {
            DivergenceMode::Analytic(f) => f(x),
            DivergenceMode::FiniteDifference { h } => {
                let m = |y: &DVector<f64>| self.s_at(y) + self.a_at(y);
                let mut div = DVector::zeros(self.dim);
                for j in 0..self.dim {
                    let mut up = x.clone();
                    let mut down = x.clone();
                    up[j] += h;
                    down[j] -= h;
                    let diff = (m(&up) - m(&down)) / (2.0 * h);
                    for i in 0..self.dim {
                        div[i] += diff[(i, j)];
                    }
                }
                div
            }
        }
    }
}

/// `−(A+S)∇V + ∂·(A+S)` at `x`.
pub fn complete_recipe_drift(x: &DVector<f64>, prob: &dyn Problem, spec: &DiffusionSpec) -> Result<DVector<f64>> {
    check_dim(prob.dim(), x.len())?;
    spec.validate_at(x)?;
    let m = spec.s_at(x) + spec.a_at(x);
    Ok(spec.divergence_at(x) - m * prob.grad(x))
}

/// Symmetric square root of a PSD matrix, clipping tiny negative eigenvalues.
fn psd_sqrt(s: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s);
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Euler–Maruyama step of `dx = [−(A+S)∇V + ∂·(A+S)] dt + sqrt(2S) dw`.
pub fn complete_recipe_em_step(
    x: &DVector<f64>,
    prob: &dyn Problem,
    spec: &DiffusionSpec,
    dt: f64,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let drift = complete_recipe_drift(x, prob, spec)?;
    let noise = psd_sqrt(spec.s_at(x)) * rng.normal_vec(x.len());
    let mut next = x + drift * dt;
    next.axpy((2.0 * dt).sqrt(), &noise, 1.0);
    if !next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("position".into()));
    }
    Ok(next)
}
