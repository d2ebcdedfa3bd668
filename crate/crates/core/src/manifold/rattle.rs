//! Dissipative RATTLE for equality constraints `ψ(q) = 0`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::hamiltonian::{evaluate_hamiltonian, DampingSchedule, KineticMetric, PhasePoint, Problem};
use crate::integrators::{Termination, Trajectory};

/// Constraint functions `ψ: ℝᵈ → ℝᵐ`.
pub trait Constraints: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of constraints `m`.
    fn count(&self) -> usize;

    fn value(&self, q: &DVector<f64>) -> DVector<f64>;

    /// `m×d` Jacobian with rows `∂ψ_a/∂q`.
    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
}

/// `ψ(q) = ‖q‖² − r²`.
#[derive(Clone, Copy, Debug)]
pub struct Sphere {
    pub dim: usize,
    pub radius: f64,
}

impl Sphere {
    pub fn unit(dim: usize) -> Self {
        Self { dim, radius: 1.0 }
    }
}

impl Constraints for Sphere {
    fn dim(&self) -> usize {
        self.dim
    }

    fn count(&self) -> usize {
        1
    }

    fn value(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, q.norm_squared() - self.radius * self.radius)
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, q.len(), (q * 2.0).as_slice())
    }
}

/// Empty constraint set on ℝᵈ.
#[derive(Clone, Copy, Debug)]
pub struct Unconstrained(pub usize);

impl Constraints for Unconstrained {
    fn dim(&self) -> usize {
        self.0
    }

    fn count(&self) -> usize {
        0
    }

    fn value(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, q.len())
    }
}

/// Constraints plus the Newton settings used to solve for the multipliers.
#[derive(Clone)]
pub struct ConstraintSet {
    funcs: Arc<dyn Constraints>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Re-evaluate the Jacobian at each Newton iterate instead of reusing `∂ψ(q_k)`.
    pub relinearize: bool,
}

impl std::fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("dim", &self.funcs.dim())
            .field("count", &self.funcs.count())
            .field("newton_tol", &self.newton_tol)
            .field("newton_max_iter", &self.newton_max_iter)
            .field("relinearize", &self.relinearize)
            .finish()
    }
}

impl ConstraintSet {
    pub fn new(funcs: impl Constraints + 'static) -> Self {
        Self { funcs: Arc::new(funcs), newton_tol: 1e-10, newton_max_iter: 50, relinearize: false }
    }

    pub fn count(&self) -> usize {
        self.funcs.count()
    }

    pub fn dim(&self) -> usize {
        self.funcs.dim()
    }

    pub fn value(&self, q: &DVector<f64>) -> DVector<f64> {
        self.funcs.value(q)
    }

    pub fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.funcs.jacobian(q)
    }

    /// `‖ψ(q)‖∞`.
    pub fn residual(&self, q: &DVector<f64>) -> f64 {
        let v = self.value(q);
        if v.is_empty() {
            0.0
        } else {
            v.amax()
        }
    }
}

/// Cholesky factor of `R_g = ∂ψ g⁻¹ ∂ψᵀ`; failure means a rank-deficient Jacobian.
fn factor_r(jac: &DMatrix<f64>, g: &KineticMetric) -> Result<Cholesky<f64, Dyn>> {
    let r = jac * g.inverse() * jac.transpose();
    let scale = r.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(r).ok_or_else(|| Error::Geometry("constraint Jacobian is rank deficient".into()))?;
    let l_min = chol.l_dirty().diagonal().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if l_min * l_min < 1e-14 * scale {
        return Err(Error::Geometry("constraint Jacobian is numerically rank deficient".into()));
    }
    Ok(chol)
}

fn apply_projector(jac: &DMatrix<f64>, g: &KineticMetric, p: &DVector<f64>) -> Result<DVector<f64>> {
    if jac.nrows() == 0 {
        return Ok(p.clone());
    }
    let chol = factor_r(jac, g)?;
    let mult = chol.solve(&(jac * g.velocity(p)));
    Ok(p - jac.transpose() * mult)
}

/// `Λ_g(q) p` with `Λ_g = I − ∂ψᵀ R_g⁻¹ ∂ψ g⁻¹`, the projector whose output
/// satisfies `∂ψ g⁻¹ Λ_g p = 0`.
pub fn project_momentum(
    q: &DVector<f64>,
    p: &DVector<f64>,
    g: &KineticMetric,
    cons: &ConstraintSet,
) -> Result<DVector<f64>> {
    check_dim(cons.dim(), q.len())?;
    check_dim(q.len(), p.len())?;
    apply_projector(&cons.jacobian(q), g, p)
}

/// One dissipative RATTLE step. Returns the new state and the converged
/// multipliers `λ`.
pub fn rattle_step(
    x: &PhasePoint,
    t_k: f64,
    dt: f64,
    g: &KineticMetric,
    sched: &DampingSchedule,
    prob: &dyn Problem,
    cons: &ConstraintSet,
) -> Result<(PhasePoint, DVector<f64>)> {
    check_dim(prob.dim(), x.dim())?;
    check_dim(cons.dim(), x.dim())?;
    check_dim(g.dim(), x.dim())?;
    let m = cons.count();
    let d_eta = sched.delta_eta(t_k, t_k + 0.5 * dt)?;
    let decay = (-d_eta).exp();
    let stretch = d_eta.cosh();
    let half = 0.5 * dt;

    let jac_k = cons.jacobian(x.q());
    let kicked = x.p() - prob.grad(x.q()) * half;
    let mut p_half = apply_projector(&jac_k, g, &kicked)?;
    p_half *= decay;

    let base_q = x.q() + g.velocity(&p_half) * (dt * stretch);
    let mut lambda = DVector::zeros(m);
    let mut q_next = base_q.clone();
    if m > 0 {
        // q(λ) = base_q − a g⁻¹ ∂ψ(q_k)ᵀ λ
        let a = dt * stretch * half * decay;
        let direction = g.inverse() * jac_k.transpose();
        let quasi = factor_r(&jac_k, g)?;
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..cons.newton_max_iter {
            let psi = cons.value(&q_next);
            residual = psi.amax();
            if !residual.is_finite() {
                break;
            }
            if residual <= cons.newton_tol {
                converged = true;
                break;
            }
            // dψ(q(λ))/dλ = −a ∂ψ(q(λ)) g⁻¹ ∂ψ(q_k)ᵀ
            let delta = if cons.relinearize {
                let jm = cons.jacobian(&q_next) * &direction * a;
                jm.lu()
                    .solve(&psi)
                    .ok_or_else(|| Error::Geometry("singular Newton matrix".into()))?
            } else {
                quasi.solve(&psi) / a
            };
            lambda += delta;
            q_next = &base_q - &direction * (&lambda * a);
        }
        if !converged {
            let psi = cons.value(&q_next);
            residual = if psi.iter().all(|v| v.is_finite()) { psi.amax() } else { residual };
            if residual <= cons.newton_tol {
                converged = true;
            }
        }
        if !converged {
            return Err(Error::ConstraintSolve { iterations: cons.newton_max_iter, residual });
        }
    }
    let p_bar = if m > 0 { &p_half - jac_k.transpose() * (&lambda * (half * decay)) } else { p_half };

    let mut p_next = p_bar * decay;
    p_next.axpy(-half, &prob.grad(&q_next), 1.0);
    let jac_next = cons.jacobian(&q_next);
    let p_next = apply_projector(&jac_next, g, &p_next)?;

    let next = PhasePoint::raw(q_next, p_next);
    next.ensure_finite()?;
    Ok((next, lambda))
}

#[derive(Clone, Debug)]
pub struct RattleRunConfig {
    pub dt: f64,
    pub num_steps: usize,
    pub schedule: DampingSchedule,
    pub metric: KineticMetric,
    /// Initial state; its momentum is projected before the first step.
    pub initial: PhasePoint,
    pub record_every: usize,
    pub target_gap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RattleRun {
    /// Carries the `constraint_residual` column.
    pub trajectory: Trajectory,
    /// Largest residual over every step, recorded or not.
    pub worst_residual: f64,
    pub last: PhasePoint,
}

pub fn run_rattle(cfg: &RattleRunConfig, prob: &dyn Problem, cons: &ConstraintSet, f_star: Option<f64>) -> Result<RattleRun> {
    if cfg.num_steps == 0 || cfg.record_every == 0 || !(cfg.dt > 0.0) {
        return Err(Error::InvalidConfig("need num_steps, record_every >= 1 and dt > 0".into()));
    }
    cfg.schedule.validate()?;
    let f_star = f_star.or_else(|| prob.known_minimum());
    let q0 = cfg.initial.q().clone();
    let init_residual = cons.residual(&q0);
    if init_residual > cons.newton_tol {
        return Err(Error::Domain(format!(
            "initial position violates the constraints (residual {init_residual:.3e})"
        )));
    }
    let p0 = project_momentum(&q0, cfg.initial.p(), &cfg.metric, cons)?;
    let mut x = PhasePoint::new(q0, p0)?;

    let t_start = cfg.schedule.start_time();
    let mut traj = Trajectory::with_capacity(cfg.num_steps / cfg.record_every + 2, false);
    let mut residuals = Vec::new();
    let mut worst = init_residual;
    let mut record = |traj: &mut Trajectory, k: usize, x: &PhasePoint, res: f64| {
        let value = prob.value(x.q());
        let energy = evaluate_hamiltonian(x, &cfg.metric, prob).unwrap_or(f64::NAN);
        traj.push(k, t_start + k as f64 * cfg.dt, value, f_star, energy);
        residuals.push(res);
    };
    record(&mut traj, 0, &x, init_residual);
    for k in 0..cfg.num_steps {
        let t_k = t_start + k as f64 * cfg.dt;
        let (next, _) = match rattle_step(&x, t_k, cfg.dt, &cfg.metric, &cfg.schedule, prob, cons) {
            Err(Error::NonFinite(_)) => return Err(Error::Divergence { step: k + 1 }),
            other => other?,
        };
        x = next;
        let step = k + 1;
        let res = cons.residual(x.q());
        worst = worst.max(res);
        let value = prob.value(x.q());
        let hit = matches!((cfg.target_gap, f_star), (Some(tol), Some(fs)) if value - fs < tol);
        if hit || step == cfg.num_steps || step % cfg.record_every == 0 {
            record(&mut traj, step, &x, res);
        }
        if hit {
            traj.termination = Termination::TargetReached { step };
            break;
        }
    }
    traj.extra = Some(("constraint_residual".to_string(), residuals));
    Ok(RattleRun { trajectory: traj, worst_residual: worst, last: x })
}
