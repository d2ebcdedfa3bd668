//! Dissipative leapfrog on the special orthogonal group.
//!
//! State is a pair `(Q, P)` with `Q ∈ SO(n)` and `P ∈ so(n)` (antisymmetric).
//! The position update is exact on the group,
//! `Q' = Q·exp(δt cosh(Δη) P½ / g)`, so orthogonality is only ever lost to
//! roundoff in the matrix products.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expm::expm;
use crate::error::{Error, Result};
use crate::hamiltonian::DampingSchedule;
use crate::integrators::{Termination, Trajectory};

/// Group-membership tolerance certified on construction.
pub const GROUP_TOL: f64 = 1e-8;
/// Algebra-membership tolerance certified on construction.
pub const ALGEBRA_TOL: f64 = 1e-10;
/// Orthogonality drift that aborts a step.
pub const GEOMETRY_LOSS_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGroupState {
    q: DMatrix<f64>,
    p: DMatrix<f64>,
}

impl MatrixGroupState {
    pub fn new(q: DMatrix<f64>, p: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.shape() != p.shape() {
            return Err(Error::Domain("Q and P must be square matrices of equal size".into()));
        }
        let st = Self { q, p };
        let od = st.orthogonality_defect();
        if !(od <= GROUP_TOL) {
            return Err(Error::GeometryLoss { defect: od, limit: GROUP_TOL });
        }
        let ad = st.algebra_defect();
        if !(ad <= ALGEBRA_TOL) {
            return Err(Error::Geometry(format!("P is not antisymmetric (defect {ad:.3e})")));
        }
        Ok(st)
    }

    /// `(I, 0)`.
    pub fn identity(n: usize) -> Self {
        Self { q: DMatrix::identity(n, n), p: DMatrix::zeros(n, n) }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    /// `‖QᵀQ − I‖_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n();
        (self.q.transpose() * &self.q - DMatrix::<f64>::identity(n, n)).norm()
    }

    /// `‖P + Pᵀ‖_F`.
    pub fn algebra_defect(&self) -> f64 {
        (&self.p + self.p.transpose()).norm()
    }

    pub fn flip_momentum(&self) -> Self {
        Self { q: self.q.clone(), p: -&self.p }
    }
}

/// Objective on `n×n` matrices restricted to SO(n).
pub trait MatrixProblem: Send + Sync {
    fn n(&self) -> usize;

    fn value(&self, q: &DMatrix<f64>) -> f64;

    /// Euclidean gradient, `G_ij = ∂f/∂Q_ij`.
    fn euclidean_grad(&self, q: &DMatrix<f64>) -> DMatrix<f64>;

    fn known_minimum(&self) -> Option<f64> {
        None
    }
}

/// `f(Q) = Tr(C Q)`.
#[derive(Clone, Debug)]
pub struct TraceLinear {
    c: DMatrix<f64>,
}

impl TraceLinear {
    pub fn new(c: DMatrix<f64>) -> Self {
        assert!(c.is_square());
        Self { c }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Minimum of `Tr(CQ)` over SO(n) from the SVD `C = U Σ Vᵀ`: the minimiser
    /// over O(n) is `−V Uᵀ`; if that has determinant −1 the smallest singular
    /// direction is flipped.
    pub fn minimum_over_so_n(&self) -> f64 {
        let svd = self.c.clone().svd(true, true);
        let u = svd.u.as_ref().expect("U requested");
        let vt = svd.v_t.as_ref().expect("Vᵀ requested");
        let sum: f64 = svd.singular_values.iter().sum();
        let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let sign = (vt.transpose() * u.transpose()).determinant();
        let n = self.c.nrows();
        // det(−VUᵀ) = (−1)ⁿ det(VUᵀ)
        let det_candidate = if n % 2 == 0 { sign } else { -sign };
        if det_candidate > 0.0 {
            -sum
        } else {
            -(sum - 2.0 * smallest)
        }
    }
}

impl MatrixProblem for TraceLinear {
    fn n(&self) -> usize {
        self.c.nrows()
    }

    fn value(&self, q: &DMatrix<f64>) -> f64 {
        self.c.component_mul(&q.transpose()).sum()
    }

    fn euclidean_grad(&self, _q: &DMatrix<f64>) -> DMatrix<f64> {
        self.c.transpose()
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(self.minimum_over_so_n())
    }
}

/// Force term used in the momentum half-steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceMode {
    /// `Tr[∂_Q f · Q · P] P` with `(∂_Q f)_ij = ∂f/∂Q_ji`; the second half-step
    /// multiplies by the pre-step `P_k`.
    TraceForm,
    /// Trivialised gradient `skew(Qᵀ G) = ½(QᵀG − GᵀQ)`.
    #[default]
    SkewProjection,
}

#[derive(Clone, Copy, Debug)]
pub struct LieParams {
    pub dt: f64,
    /// Kinetic scale `g > 0`.
    pub g_scalar: f64,
    pub schedule: DampingSchedule,
    pub mode: ForceMode,
}

fn skew(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a - a.transpose()) * 0.5
}

/// `Tr(A B)` without forming the product.
fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

/// `‖P‖²_F / (2g)`, the kinetic energy that the `SkewProjection` force conserves at γ = 0.
pub fn kinetic_energy(p: &DMatrix<f64>, g_scalar: f64) -> f64 {
    p.norm_squared() / (2.0 * g_scalar)
}

pub fn lie_group_step(
    st: &MatrixGroupState,
    t_k: f64,
    params: &LieParams,
    prob: &dyn MatrixProblem,
) -> Result<MatrixGroupState> {
    let LieParams { dt, g_scalar, schedule, mode } = *params;
    if !(g_scalar > 0.0) {
        return Err(Error::Domain(format!("g must be positive, got {g_scalar}")));
    }
    let d_eta = schedule.delta_eta(t_k, t_k + 0.5 * dt)?;
    let decay = (-d_eta).exp();
    let stretch = d_eta.cosh();
    let half = 0.5 * dt;

    let (q, p) = (&st.q, &st.p);
    let p_half = match mode {
        ForceMode::SkewProjection => {
            let force = skew(&(q.transpose() * prob.euclidean_grad(q)));
            (p - force * half) * decay
        }
        ForceMode::TraceForm => {
            let dq_f = prob.euclidean_grad(q).transpose();
            let scale = trace_of_product(&(dq_f * q), p);
            (p - p * (half * scale)) * decay
        }
    };
    let q_next = q * expm(&(&p_half * (dt * stretch / g_scalar)));
    let p_next = match mode {
        ForceMode::SkewProjection => {
            let force = skew(&(q_next.transpose() * prob.euclidean_grad(&q_next)));
            &p_half * decay - force * half
        }
        ForceMode::TraceForm => {
            let dq_f = prob.euclidean_grad(&q_next).transpose();
            let scale = trace_of_product(&(dq_f * &q_next), &p_half);
            &p_half * decay - p * (half * scale)
        }
    };

    if !q_next.iter().chain(p_next.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("matrix group state".into()));
    }
    let next = MatrixGroupState { q: q_next, p: p_next };
    let defect = next.orthogonality_defect();
    if defect > GEOMETRY_LOSS_LIMIT {
        return Err(Error::GeometryLoss { defect, limit: GEOMETRY_LOSS_LIMIT });
    }
    let ad = next.algebra_defect();
    if ad > ALGEBRA_TOL {
        return Err(Error::Geometry(format!("momentum left the algebra (defect {ad:.3e})")));
    }
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct LieRunConfig {
    pub params: LieParams,
    pub num_steps: usize,
    pub record_every: usize,
    pub target_gap: Option<f64>,
    pub initial: MatrixGroupState,
}

/// Runs the Lie-group integrator; the trajectory's extra column is
/// `orthogonality_defect`.
pub fn run_lie(cfg: &LieRunConfig, prob: &dyn MatrixProblem) -> Result<Trajectory> {
    if cfg.num_steps == 0 || cfg.record_every == 0 || !(cfg.params.dt > 0.0) {
        return Err(Error::InvalidConfig("need num_steps, record_every >= 1 and dt > 0".into()));
    }
    cfg.params.schedule.validate()?;
    let f_star = prob.known_minimum();
    let t_start = cfg.params.schedule.start_time();
    let dt = cfg.params.dt;
    let g = cfg.params.g_scalar;

    let mut traj = Trajectory::with_capacity(cfg.num_steps / cfg.record_every + 2, false);
    let mut defects = Vec::new();
    let mut record = |traj: &mut Trajectory, k: usize, st: &MatrixGroupState| -> f64 {
        let value = prob.value(&st.q);
        traj.steps.push(k);
        traj.times.push(t_start + k as f64 * dt);
        traj.values.push(value);
        traj.gaps.push(f_star.map_or(f64::NAN, |fs| value - fs));
        traj.energies.push(kinetic_energy(&st.p, g) + value);
        defects.push(st.orthogonality_defect());
        value
    };

    let mut st = cfg.initial.clone();
    let reached = |v: f64| matches!((cfg.target_gap, f_star), (Some(tol), Some(fs)) if v - fs < tol);
    let v0 = record(&mut traj, 0, &st);
    if reached(v0) {
        traj.termination = Termination::TargetReached { step: 0 };
    } else {
        for k in 0..cfg.num_steps {
            let t_k = t_start + k as f64 * dt;
            st = match lie_group_step(&st, t_k, &cfg.params, prob) {
                Ok(next) => next,
                Err(Error::NonFinite(_)) => return Err(Error::Divergence { step: k + 1 }),
                Err(e) => return Err(e),
            };
            let step = k + 1;
            let value = prob.value(&st.q);
            let hit = reached(value);
            if hit || step == cfg.num_steps || step % cfg.record_every == 0 {
                record(&mut traj, step, &st);
            }
            if hit {
                traj.termination = Termination::TargetReached { step };
                break;
            }
        }
    }
    traj.extra = Some(("orthogonality_defect".to_string(), defects));
    Ok(traj)
}
