//! Flat-space optimisers: the dissipative leapfrog (in conformal variables),
//! the explicit gradient-flow baseline, run orchestration and rate fitting.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hamiltonian::{evaluate_hamiltonian, DampingSchedule, KineticMetric, PhasePoint, Problem};
use crate::numfmt::sci17;

/// Default divergence threshold on `|f|` and `‖q‖∞`.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// One step of the dissipative leapfrog with `Δη = ∫_{t_k}^{t_k+δt/2} γ`:
///
/// ```text
/// p½   = e^{−Δη} (p − δt/2 ∇f(q))
/// q'   = q + δt cosh(Δη) g⁻¹ p½
/// p'   = e^{−Δη} p½ − δt/2 ∇f(q')
/// ```
pub fn dissipative_leapfrog_step(
    x: &PhasePoint,
    t_k: f64,
    dt: f64,
    g: &KineticMetric,
    sched: &DampingSchedule,
    prob: &dyn Problem,
) -> Result<PhasePoint> {
    check_dim(prob.dim(), x.dim())?;
    check_dim(g.dim(), x.dim())?;
    let d_eta = sched.delta_eta(t_k, t_k + 0.5 * dt)?;
    let decay = (-d_eta).exp();
    let stretch = d_eta.cosh();
    let half = 0.5 * dt;

    let mut p_half = x.p() - prob.grad(x.q()) * half;
    p_half *= decay;
    let q_next = x.q() + g.velocity(&p_half) * (dt * stretch);
    let mut p_next = p_half * decay;
    p_next.axpy(-half, &prob.grad(&q_next), 1.0);

    let next = PhasePoint::raw(q_next, p_next);
    next.ensure_finite()?;
    Ok(next)
}

/// Explicit Euler step of the gradient flow, `q − δt ∇f(q)`.
pub fn gradient_flow_step(q: &DVector<f64>, dt: f64, prob: &dyn Problem) -> Result<DVector<f64>> {
    check_dim(prob.dim(), q.len())?;
    let next = q - prob.grad(q) * dt;
    if !next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("position".into()));
    }
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DissipativeLeapfrog,
    GradientFlow,
}

#[derive(Clone, Debug)]
pub enum MetricChoice {
    /// Resolves to `g = δt·I`.
    Auto,
    Explicit(KineticMetric),
}

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub step: f64,
    pub num_steps: usize,
    pub schedule: DampingSchedule,
    pub metric: MetricChoice,
    pub initial: PhasePoint,
    pub record_every: usize,
    /// Stop once `f − f★` falls below this value.
    pub target_gap: Option<f64>,
    pub divergence_threshold: f64,
    pub keep_states: bool,
}

impl OptimizerConfig {
    pub fn new(step: f64, num_steps: usize, schedule: DampingSchedule, initial: PhasePoint) -> Self {
        Self {
            step,
            num_steps,
            schedule,
            metric: MetricChoice::Auto,
            initial,
            record_every: 1,
            target_gap: None,
            divergence_threshold: DIVERGENCE_THRESHOLD,
            keep_states: false,
        }
    }

    pub fn with_metric(mut self, g: KineticMetric) -> Self {
        self.metric = MetricChoice::Explicit(g);
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_target_gap(mut self, gap: f64) -> Self {
        self.target_gap = Some(gap);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidConfig(format!("step must be > 0, got {}", self.step)));
        }
        if self.num_steps == 0 {
            return Err(Error::InvalidConfig("num_steps must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidConfig("divergence threshold must be positive".into()));
        }
        self.schedule.validate()?;
        if let MetricChoice::Explicit(g) = &self.metric {
            check_dim(self.initial.dim(), g.dim())?;
        }
        Ok(())
    }

    pub fn resolved_metric(&self) -> Result<KineticMetric> {
        match &self.metric {
            MetricChoice::Auto => KineticMetric::scaled_identity(self.initial.dim(), self.step),
            MetricChoice::Explicit(g) => Ok(g.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    TargetReached { step: usize },
    Diverged { step: usize },
}

/// Recorded optimisation history.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `f − f★`, or NaN when `f★` is unknown.
    pub gaps: Vec<f64>,
    pub energies: Vec<f64>,
    pub states: Option<Vec<PhasePoint>>,
    /// Optional extra column (e.g. constraint residual).
    pub extra: Option<(String, Vec<f64>)>,
    pub termination: Termination,
}

impl Trajectory {
    pub(crate) fn with_capacity(n: usize, keep_states: bool) -> Self {
        Self {
            steps: Vec::with_capacity(n),
            times: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            gaps: Vec::with_capacity(n),
            energies: Vec::with_capacity(n),
            states: keep_states.then(|| Vec::with_capacity(n)),
            extra: None,
            termination: Termination::Completed,
        }
    }

    /// Trajectory holding only times and gaps, e.g. synthetic data for fits.
    pub fn from_gaps(times: Vec<f64>, gaps: Vec<f64>) -> Self {
        let n = times.len();
        assert_eq!(n, gaps.len());
        Self {
            steps: (0..n).collect(),
            values: gaps.clone(),
            gaps,
            times,
            energies: vec![f64::NAN; n],
            states: None,
            extra: None,
            termination: Termination::Completed,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.gaps.last().copied()
    }

    pub(crate) fn push(&mut self, step: usize, time: f64, value: f64, f_star: Option<f64>, energy: f64) {
        self.steps.push(step);
        self.times.push(time);
        self.values.push(value);
        self.gaps.push(f_star.map_or(f64::NAN, |fs| value - fs));
        self.energies.push(energy);
    }

    /// CSV with header `step,time,value,gap,energy[,extra]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "step,time,value,gap,energy")?;
        if let Some((name, _)) = &self.extra {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(
                w,
                "{},{},{},{},{}",
                self.steps[i],
                sci17(self.times[i]),
                sci17(self.values[i]),
                sci17(self.gaps[i]),
                sci17(self.energies[i])
            )?;
            if let Some((_, col)) = &self.extra {
                write!(w, ",{}", sci17(col[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// A run that stopped on an error; `partial` holds everything recorded up to
/// and including the last finite state.
#[derive(Debug, thiserror::Error)]
#[error("{source}")]
pub struct RunFailure {
    #[source]
    pub source: Error,
    pub partial: Option<Box<Trajectory>>,
}

impl From<Error> for RunFailure {
    fn from(source: Error) -> Self {
        Self { source, partial: None }
    }
}

impl From<RunFailure> for Error {
    fn from(f: RunFailure) -> Self {
        f.source
    }
}

fn out_of_bounds(value: f64, q: &DVector<f64>, limit: f64) -> bool {
    !value.is_finite() || value.abs() > limit || q.amax() > limit
}

/// Runs `num_steps` iterations of `method`, recording every `record_every`
/// steps plus the initial and final states.
pub fn run_optimizer(
    cfg: &OptimizerConfig,
    prob: &dyn Problem,
    method: Method,
) -> std::result::Result<Trajectory, RunFailure> {
    cfg.validate()?;
    check_dim(prob.dim(), cfg.initial.dim())?;
    let g = cfg.resolved_metric()?;
    let f_star = prob.known_minimum();
    let t_start = cfg.schedule.start_time();
    let dt = cfg.step;
    let expected = cfg.num_steps.div_ceil(cfg.record_every) + 1;
    let mut traj = Trajectory::with_capacity(expected, cfg.keep_states);

    let mut x = cfg.initial.clone();
    if method == Method::GradientFlow {
        x = PhasePoint::at_rest(x.q().clone())?;
    }
    let record = |traj: &mut Trajectory, k: usize, x: &PhasePoint| -> Result<f64> {
        let value = prob.value(x.q());
        let energy = evaluate_hamiltonian(x, &g, prob).unwrap_or(f64::NAN);
        traj.push(k, t_start + k as f64 * dt, value, f_star, energy);
        if let Some(states) = traj.states.as_mut() {
            states.push(x.clone());
        }
        Ok(value)
    };

    let v0 = record(&mut traj, 0, &x)?;
    if let (Some(tol), Some(fs)) = (cfg.target_gap, f_star) {
        if v0 - fs < tol {
            traj.termination = Termination::TargetReached { step: 0 };
            return Ok(traj);
        }
    }

    for k in 0..cfg.num_steps {
        let t_k = t_start + k as f64 * dt;
        let next = match method {
            Method::DissipativeLeapfrog => dissipative_leapfrog_step(&x, t_k, dt, &g, &cfg.schedule, prob),
            Method::GradientFlow => gradient_flow_step(x.q(), dt, prob).and_then(PhasePoint::at_rest),
        };
        let step = k + 1;
        let diverged = match next {
            Ok(n) => {
                let value = prob.value(n.q());
                if out_of_bounds(value, n.q(), cfg.divergence_threshold) {
                    true
                } else {
                    x = n;
                    let last = step == cfg.num_steps;
                    let reached = matches!((cfg.target_gap, f_star), (Some(tol), Some(fs)) if value - fs < tol);
                    if last || reached || step % cfg.record_every == 0 {
                        record(&mut traj, step, &x)?;
                    }
                    if reached {
                        traj.termination = Termination::TargetReached { step };
                        return Ok(traj);
                    }
                    false
                }
            }
            Err(Error::NonFinite(_)) => true,
            Err(e) => return Err(RunFailure { source: e, partial: Some(Box::new(traj)) }),
        };
        if diverged {
            if traj.steps.last() != Some(&k) {
                record(&mut traj, k, &x)?;
            }
            traj.termination = Termination::Diverged { step };
            return Err(RunFailure {
                source: Error::Divergence { step },
                partial: Some(Box::new(traj)),
            });
        }
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `log gap ≈ a + k log t`; reports the exponent `k`.
    PowerLaw,
    /// `log gap ≈ a − λ t`; reports the rate `λ`.
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Power-law exponent or exponential rate, per the model.
    pub coefficient: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    /// Fraction of recorded points discarded from the start.
    pub burn_in: f64,
    /// Minimum number of recorded points.
    pub min_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { burn_in: 0.2, min_points: 10 }
    }
}

pub fn fit_rate(traj: &Trajectory, model: RateModel) -> Result<RateFit> {
    fit_rate_with(traj, model, FitOptions::default())
}

pub fn fit_rate_with(traj: &Trajectory, model: RateModel, opts: FitOptions) -> Result<RateFit> {
    let n = traj.len();
    if n < opts.min_points {
        return Err(Error::InsufficientSamples { needed: opts.min_points, got: n });
    }
    if !(0.0..1.0).contains(&opts.burn_in) {
        return Err(Error::InvalidConfig(format!("burn-in fraction {} outside [0, 1)", opts.burn_in)));
    }
    let start = (opts.burn_in * n as f64).floor() as usize;
    let mut xs = Vec::with_capacity(n - start);
    let mut ys = Vec::with_capacity(n - start);
    for i in start..n {
        let gap = traj.gaps[i];
        if !(gap > 0.0) || !gap.is_finite() {
            return Err(Error::FitDomain(format!(
                "gap {gap:e} at record {i} (t = {}) is not strictly positive",
                traj.times[i]
            )));
        }
        let t = traj.times[i];
        let x = match model {
            RateModel::PowerLaw => {
                if !(t > 0.0) {
                    return Err(Error::FitDomain(format!("power-law fit needs t > 0, got {t}")));
                }
                t.ln()
            }
            RateModel::Exponential => t,
        };
        xs.push(x);
        ys.push(gap.ln());
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: xs.len() });
    }
    let (slope, intercept, r2) = least_squares(&xs, &ys);
    let coefficient = match model {
        RateModel::PowerLaw => slope,
        RateModel::Exponential => -slope,
    };
    Ok(RateFit { coefficient, intercept, r2, points: xs.len() })
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, r²)`.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    (slope, intercept, r2)
}
