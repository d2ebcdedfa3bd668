//! Score models and the diffusion score-matching estimator.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::gram::mean_var;
use super::{check_samples, Statistic};
use crate::error::{check_dim, Error, Result};
use crate::samplers::RngStream;

/// A parametric family `q_θ` seen through its score `∂ₓ log q_θ`.
pub trait ScoreModel: Send + Sync {
    fn dim(&self) -> usize;

    fn num_params(&self) -> usize;

    fn score(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;

    /// `∂_θ ∂ₓ log q_θ(x)` as a `d×p` matrix (column `j` is `∂_{θ_j}` of the score).
    fn score_theta(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;

    /// `∂ₓ` of the score (`d×d`, entry `(k, i)` is `∂_i s_k`), if known in closed form.
    fn score_jacobian(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `∂_θ tr(M ∂ₓs)`, if known in closed form.
    fn divergence_theta_grad(&self, _x: &DVector<f64>, _theta: &DVector<f64>, _m: &DMatrix<f64>) -> Option<DVector<f64>> {
        None
    }

    fn log_density(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> Option<f64> {
        None
    }

    fn sample(&self, _theta: &DVector<f64>, _rng: &mut RngStream) -> Option<DVector<f64>> {
        None
    }

    fn name(&self) -> String {
        "score model".into()
    }
}

/// `N(θ, Σ)` with fixed covariance; `θ` is the mean.
#[derive(Clone, Debug)]
pub struct GaussianLocation {
    cov: DMatrix<f64>,
    prec: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianLocation {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::Domain("covariance must be square".into()));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Domain("covariance must be symmetric positive definite".into()))?;
        let prec = chol.inverse();
        Ok(Self { cov, prec, chol })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is positive definite")
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

impl ScoreModel for GaussianLocation {
    fn dim(&self) -> usize {
        self.cov.nrows()
    }

    fn num_params(&self) -> usize {
        self.cov.nrows()
    }

    fn score(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        -(&self.prec * (x - theta))
    }

    fn score_theta(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> DMatrix<f64> {
        self.prec.clone()
    }

    fn score_jacobian(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(-&self.prec)
    }

    fn divergence_theta_grad(&self, _x: &DVector<f64>, _theta: &DVector<f64>, _m: &DMatrix<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.num_params()))
    }

    fn log_density(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Option<f64> {
        let d = self.dim() as f64;
        let r = x - theta;
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        Some(-0.5 * r.dot(&(&self.prec * &r)) - 0.5 * log_det - 0.5 * d * (2.0 * std::f64::consts::PI).ln())
    }

    fn sample(&self, theta: &DVector<f64>, rng: &mut RngStream) -> Option<DVector<f64>> {
        Some(theta + self.chol.l() * rng.normal_vec(self.dim()))
    }

    fn name(&self) -> String {
        format!("gaussian_location(d={})", self.dim())
    }
}

/// Options shared by the score-matching routines.
#[derive(Clone, Debug, Default)]
pub struct SmOptions {
    /// Constant `B`; `None` is the identity.
    pub b: Option<DMatrix<f64>>,
    /// Central-difference step used when the model lacks a closed-form
    /// divergence. `None` disables the fallback.
    pub finite_difference: Option<f64>,
}

impl SmOptions {
    pub fn with_b(b: DMatrix<f64>) -> Self {
        Self { b: Some(b), finite_difference: None }
    }

    fn m(&self, d: usize) -> Result<DMatrix<f64>> {
        match &self.b {
            None => Ok(DMatrix::identity(d, d)),
            Some(b) if b.nrows() == d => Ok(b * b.transpose()),
            Some(b) => Err(Error::DimensionMismatch { expected: d, got: b.nrows() }),
        }
    }
}

fn fd_score_jacobian(model: &dyn ScoreModel, x: &DVector<f64>, theta: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += h;
        down[i] -= h;
        jac.set_column(i, &((model.score(&up, theta) - model.score(&down, theta)) / (2.0 * h)));
    }
    jac
}

fn divergence_term(
    model: &dyn ScoreModel,
    x: &DVector<f64>,
    theta: &DVector<f64>,
    m: &DMatrix<f64>,
    opts: &SmOptions,
) -> Result<f64> {
    let jac = match (model.score_jacobian(x, theta), opts.finite_difference) {
        (Some(j), _) => j,
        (None, Some(h)) => fd_score_jacobian(model, x, theta, h),
        (None, None) => {
            return Err(Error::Capability(format!(
                "{} has no closed-form score divergence and the finite-difference fallback is off",
                model.name()
            )))
        }
    };
    Ok((m * jac).trace())
}

fn check_theta(model: &dyn ScoreModel, theta: &DVector<f64>) -> Result<()> {
    check_dim(model.num_params(), theta.len())
}

/// `(1/m) Σ (‖Bᵀ s_θ‖² + 2 ∂ₓ·(BBᵀ s_θ))` over the samples, with the i.i.d.
/// standard error of the summands.
pub fn sm_estimate(xs: &[DVector<f64>], model: &dyn ScoreModel, theta: &DVector<f64>, opts: &SmOptions) -> Result<Statistic> {
    let d = check_samples(xs, 1)?;
    check_dim(model.dim(), d)?;
    check_theta(model, theta)?;
    let m = opts.m(d)?;
    let terms = xs
        .iter()
        .map(|x| {
            let s = model.score(x, theta);
            Ok(s.dot(&(&m * &s)) + 2.0 * divergence_term(model, x, theta, &m, opts)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = terms.len() as f64;
    let value = terms.iter().sum::<f64>() / n;
    let stderr = if terms.len() > 1 { (mean_var(&terms).1 / n).sqrt() } else { f64::NAN };
    Ok(Statistic { value, stderr, n: terms.len() })
}

/// `∂_θ` of [`sm_estimate`].
pub fn sm_gradient(xs: &[DVector<f64>], model: &dyn ScoreModel, theta: &DVector<f64>, opts: &SmOptions) -> Result<DVector<f64>> {
    let d = check_samples(xs, 1)?;
    check_dim(model.dim(), d)?;
    check_theta(model, theta)?;
    let m = opts.m(d)?;
    let p = model.num_params();
    let mut grad = DVector::zeros(p);
    for x in xs {
        let s = model.score(x, theta);
        let js = model.score_theta(x, theta);
        grad += js.transpose() * (&m * &s) * 2.0;
        let div_grad = match (model.divergence_theta_grad(x, theta, &m), opts.finite_difference) {
            (Some(g), _) => g,
            (None, Some(h)) => DVector::from_fn(p, |j, _| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += h;
                down[j] -= h;
                let f = |t: &DVector<f64>| divergence_term(model, x, t, &m, opts).unwrap_or(f64::NAN);
                (f(&up) - f(&down)) / (2.0 * h)
            }),
            (None, None) => {
                return Err(Error::Capability(format!(
                    "{} has no closed-form divergence gradient and the finite-difference fallback is off",
                    model.name()
                )))
            }
        };
        grad += div_grad * 2.0;
    }
    grad /= xs.len() as f64;
    if !grad.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("score-matching gradient".into()));
    }
    Ok(grad)
}
