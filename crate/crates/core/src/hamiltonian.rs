//! Phase-space types, the separable Hamiltonian `H = ½ pᵀ g⁻¹ p + f(q)` and the
//! conformal (damped) vector field that every integrator in the crate consumes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Position/momentum pair `(q, p)` of equal length with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    q: DVector<f64>,
    p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Domain("phase space dimension must be >= 1".into()));
        }
        check_dim(q.len(), p.len())?;
        let x = Self { q, p };
        x.ensure_finite()?;
        Ok(x)
    }

    /// Rest state `(q, 0)`.
    pub fn at_rest(q: DVector<f64>) -> Result<Self> {
        let p = DVector::zeros(q.len());
        Self::new(q, p)
    }

    pub fn from_slices(q: &[f64], p: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(p))
    }

    /// Builds a point without the finiteness check; callers validate later.
    pub(crate) fn raw(q: DVector<f64>, p: DVector<f64>) -> Self {
        debug_assert_eq!(q.len(), p.len());
        Self { q, p }
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn into_parts(self) -> (DVector<f64>, DVector<f64>) {
        (self.q, self.p)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        if !self.q.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("position".into()));
        }
        if !self.p.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("momentum".into()));
        }
        Ok(())
    }

    /// `(q, -p)`.
    pub fn flip_momentum(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: -&self.p,
        }
    }

    /// Largest coordinate-wise distance to `other` over both `q` and `p`.
    pub fn max_abs_diff(&self, other: &PhasePoint) -> f64 {
        (&self.q - &other.q)
            .amax()
            .max((&self.p - &other.p).amax())
    }
}

/// Constant symmetric positive-definite mass matrix `g` with cached inverse
/// and Cholesky factor.
#[derive(Clone, Debug)]
pub struct KineticMetric {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl KineticMetric {
    /// Symmetrises `g` and certifies positive-definiteness by factorising it.
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() || g.nrows() == 0 {
            return Err(Error::Domain("metric must be a non-empty square matrix".into()));
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("metric".into()));
        }
        let g = (&g + g.transpose()) * 0.5;
        let chol = Cholesky::new(g.clone())
            .ok_or_else(|| Error::Geometry("metric is not positive definite".into()))?;
        let g_inv = chol.inverse();
        Ok(Self { g, g_inv, chol })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0).expect("identity metric is positive definite")
    }

    /// `s·I`, the default `g = δt·I` for optimisation uses `s = δt`.
    pub fn scaled_identity(dim: usize, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!("metric scale must be positive, got {s}")));
        }
        Self::new(DMatrix::identity(dim, dim) * s)
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.g_inv
    }

    /// Lower Cholesky factor `L` with `g = L Lᵀ`.
    pub fn cholesky_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `g⁻¹ p`.
    pub fn velocity(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.g_inv * p
    }

    /// `½ pᵀ g⁻¹ p`.
    pub fn kinetic_energy(&self, p: &DVector<f64>) -> f64 {
        0.5 * p.dot(&self.velocity(p))
    }

    /// Momentum draw `p ~ N(0, g)`, i.e. velocity `g⁻¹p ~ N(0, g⁻¹)`.
    pub fn sample_momentum(&self, xi: DVector<f64>) -> DVector<f64> {
        self.chol.l() * xi
    }

    /// Largest absolute entry of `g g⁻¹ − I`.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.dim();
        (&self.g * &self.g_inv - DMatrix::<f64>::identity(n, n)).amax()
    }
}

/// Damping `γ(t)` and its exact integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingSchedule {
    Constant { gamma: f64 },
    /// `γ(t) = r/t` for `t ≥ t0 > 0`.
    Vanishing {
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_t0")]
        t0: f64,
    },
    Zero,
}

fn default_r() -> f64 {
    3.0
}

fn default_t0() -> f64 {
    1.0
}

impl DampingSchedule {
    pub fn constant(gamma: f64) -> Result<Self> {
        let s = Self::Constant { gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn vanishing(r: f64, t0: f64) -> Result<Self> {
        let s = Self::Vanishing { r, t0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { gamma } if !(gamma > 0.0) || !gamma.is_finite() => Err(
                Error::InvalidConfig(format!("constant damping needs gamma > 0, got {gamma}")),
            ),
            Self::Vanishing { r, t0 } if !(r > 0.0 && t0 > 0.0) || !(r.is_finite() && t0.is_finite()) => {
                Err(Error::InvalidConfig(format!(
                    "vanishing damping needs r > 0 and t0 > 0, got r={r}, t0={t0}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Time at which integration starts: `t0` for vanishing damping, else 0.
    pub fn start_time(&self) -> f64 {
        match *self {
            Self::Vanishing { t0, .. } => t0,
            _ => 0.0,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("time must be finite, got {t}")));
        }
        if let Self::Vanishing { t0, .. } = *self {
            if t < t0 {
                return Err(Error::Domain(format!(
                    "vanishing damping is defined for t >= t0 = {t0}, got t = {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn gamma_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match *self {
            Self::Constant { gamma } => gamma,
            Self::Vanishing { r, .. } => r / t,
            Self::Zero => 0.0,
        })
    }

    /// `∫_{t_a}^{t_b} γ(t) dt` in closed form.
    pub fn delta_eta(&self, t_a: f64, t_b: f64) -> Result<f64> {
        self.check_time(t_a)?;
        self.check_time(t_b)?;
        if t_a > t_b {
            return Err(Error::Domain(format!(
                "integration interval reversed: t_a = {t_a} > t_b = {t_b}"
            )));
        }
        Ok(match *self {
            Self::Constant { gamma } => gamma * (t_b - t_a),
            Self::Vanishing { r, .. } => r * (t_b / t_a).ln(),
            Self::Zero => 0.0,
        })
    }
}

/// A differentiable objective `f`, or a negative log-density `V` when sampling.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, q: &DVector<f64>) -> f64;

    fn grad(&self, q: &DVector<f64>) -> DVector<f64>;

    fn hessian_vec(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Certified global minimum value `f★`, when known.
    fn known_minimum(&self) -> Option<f64> {
        None
    }

    fn minimiser(&self) -> Option<DVector<f64>> {
        None
    }

    fn name(&self) -> String {
        "problem".to_string()
    }

    /// True when `grad` is a finite-difference approximation (test use only).
    fn uses_finite_differences(&self) -> bool {
        false
    }
}

/// `H(q, p) = ½ pᵀ g⁻¹ p + f(q)`.
pub fn evaluate_hamiltonian(x: &PhasePoint, g: &KineticMetric, prob: &dyn Problem) -> Result<f64> {
    check_dim(prob.dim(), x.dim())?;
    check_dim(g.dim(), x.dim())?;
    let kinetic = g.kinetic_energy(x.p());
    if !kinetic.is_finite() {
        return Err(Error::NumericOverflow { term: "kinetic energy" });
    }
    let potential = prob.value(x.q());
    if !potential.is_finite() {
        return Err(Error::NumericOverflow { term: "potential energy" });
    }
    let h = kinetic + potential;
    if !h.is_finite() {
        return Err(Error::NumericOverflow { term: "total energy" });
    }
    Ok(h)
}

/// Conformal field `q̇ = g⁻¹p`, `ṗ = −∇f(q) − γ(t) p`.
pub fn conformal_vector_field(
    x: &PhasePoint,
    t: f64,
    g: &KineticMetric,
    prob: &dyn Problem,
    sched: &DampingSchedule,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim(prob.dim(), x.dim())?;
    check_dim(g.dim(), x.dim())?;
    let gamma = sched.gamma_at(t)?;
    let dq = g.velocity(x.p());
    let mut dp = -prob.grad(x.q());
    if gamma != 0.0 {
        dp.axpy(-gamma, x.p(), 1.0);
    }
    Ok((dq, dp))
}

/// `dH/dt = −γ(t) pᵀ g⁻¹ p` along the conformal flow; never positive.
pub fn dissipation_rate(
    x: &PhasePoint,
    t: f64,
    g: &KineticMetric,
    sched: &DampingSchedule,
) -> Result<f64> {
    check_dim(g.dim(), x.dim())?;
    let gamma = sched.gamma_at(t)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    Ok(-gamma * x.p().dot(&g.velocity(x.p())))
}

/// Free function form of [`DampingSchedule::delta_eta`].
pub fn delta_eta(sched: &DampingSchedule, t_a: f64, t_b: f64) -> Result<f64> {
    sched.delta_eta(t_a, t_b)
}

/// Central-difference gradient, step `cbrt(eps)·max(1, |q_i|)`.
pub fn finite_difference_grad<F>(f: F, q: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let base = f64::EPSILON.cbrt();
    let mut x = q.clone();
    DVector::from_iterator(
        q.len(),
        (0..q.len()).map(|i| {
            let h = base * q[i].abs().max(1.0);
            x[i] = q[i] + h;
            let up = f(&x);
            x[i] = q[i] - h;
            let down = f(&x);
            x[i] = q[i];
            (up - down) / (2.0 * h)
        }),
    )
}
