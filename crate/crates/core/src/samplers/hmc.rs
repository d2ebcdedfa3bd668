//! Hamiltonian Monte Carlo with leapfrog or three-stage trajectories.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::chain::ChainState;
use super::rng::RngStream;
use crate::error::{check_dim, Error, Result};
use crate::hamiltonian::{evaluate_hamiltonian, KineticMetric, PhasePoint, Problem};
use crate::integrators::DIVERGENCE_THRESHOLD;

/// Stage weights minimising the expected energy error on Gaussian targets.
pub const THREE_STAGE_A: f64 = 0.29619504261126;
pub const THREE_STAGE_B: f64 = 0.11888010966548;

fn check_bounded(q: &DVector<f64>, p: &DVector<f64>, step: usize) -> Result<()> {
    let ok = |v: &DVector<f64>| v.iter().all(|x| x.is_finite() && x.abs() <= DIVERGENCE_THRESHOLD);
    if ok(q) && ok(p) {
        Ok(())
    } else {
        Err(Error::Divergence { step })
    }
}

fn check_inputs(x: &PhasePoint, prob: &dyn Problem, g: &KineticMetric, dt: f64) -> Result<()> {
    check_dim(prob.dim(), x.dim())?;
    check_dim(g.dim(), x.dim())?;
    x.ensure_finite()?;
    if !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("step size must be finite, got {dt}")));
    }
    Ok(())
}

/// `steps` kick-drift-kick leapfrog steps for `H = ½pᵀg⁻¹p + V(q)`.
pub fn leapfrog_trajectory(
    x: &PhasePoint,
    prob: &dyn Problem,
    g: &KineticMetric,
    dt: f64,
    steps: usize,
) -> Result<PhasePoint> {
    check_inputs(x, prob, g, dt)?;
    let half = 0.5 * dt;
    let mut q = x.q().clone();
    let mut p = x.p().clone();
    let mut grad = prob.grad(&q);
    for k in 0..steps {
        p.axpy(-half, &grad, 1.0);
        q.axpy(dt, &g.velocity(&p), 1.0);
        grad = prob.grad(&q);
        p.axpy(-half, &grad, 1.0);
        check_bounded(&q, &p, k + 1)?;
    }
    Ok(PhasePoint::raw(q, p))
}

/// `steps` applications of the palindromic seven-map composition
/// drift(b) kick(a) drift(½−b) kick(1−2a) drift(½−b) kick(a) drift(b),
/// where drift is the kinetic flow and kick the potential flow.
pub fn three_stage_trajectory(
    x: &PhasePoint,
    prob: &dyn Problem,
    g: &KineticMetric,
    dt: f64,
    steps: usize,
    a: f64,
    b: f64,
) -> Result<PhasePoint> {
    check_inputs(x, prob, g, dt)?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidConfig("stage weights must be finite".into()));
    }
    let mut q = x.q().clone();
    let mut p = x.p().clone();
    let drifts = [b, 0.5 - b, 0.5 - b, b];
    let kicks = [a, 1.0 - 2.0 * a, a];
    for k in 0..steps {
        for stage in 0..3 {
            q.axpy(drifts[stage] * dt, &g.velocity(&p), 1.0);
            p.axpy(-kicks[stage] * dt, &prob.grad(&q), 1.0);
        }
        q.axpy(drifts[3] * dt, &g.velocity(&p), 1.0);
        check_bounded(&q, &p, k + 1)?;
    }
    Ok(PhasePoint::raw(q, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrator {
    Leapfrog,
    ThreeStage {
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_b")]
        b: f64,
    },
}

fn default_a() -> f64 {
    THREE_STAGE_A
}

fn default_b() -> f64 {
    THREE_STAGE_B
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Leapfrog
    }
}

impl Integrator {
    pub fn three_stage() -> Self {
        Integrator::ThreeStage { a: THREE_STAGE_A, b: THREE_STAGE_B }
    }

    pub fn integrate(
        &self,
        x: &PhasePoint,
        prob: &dyn Problem,
        g: &KineticMetric,
        dt: f64,
        steps: usize,
    ) -> Result<PhasePoint> {
        match *self {
            Integrator::Leapfrog => leapfrog_trajectory(x, prob, g, dt, steps),
            Integrator::ThreeStage { a, b } => three_stage_trajectory(x, prob, g, dt, steps, a, b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcParams {
    pub dt: f64,
    pub steps: usize,
    /// Fraction of `steps` by which the trajectory length may be shortened.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub integrator: Integrator,
}

impl HmcParams {
    pub fn new(dt: f64, steps: usize) -> Self {
        Self { dt, steps, jitter: 0.0, integrator: Integrator::Leapfrog }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("HMC step must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("HMC needs at least one integration step".into()));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::InvalidConfig(format!("jitter must lie in [0, 1], got {}", self.jitter)));
        }
        Ok(())
    }

    /// Smallest trajectory length, `⌈(1 − jitter)·L⌉`.
    pub fn min_steps(&self) -> usize {
        (((1.0 - self.jitter) * self.steps as f64).ceil() as usize).min(self.steps)
    }
}

/// What happened in one HMC transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draw {
    pub accepted: bool,
    pub accept_prob: f64,
    pub delta_h: f64,
    pub trajectory_steps: usize,
}

/// One HMC transition: momentum refresh, integration, Metropolis test.
///
/// A rejected proposal leaves the chain at `(q, −p†)`. An integration failure
/// or a non-finite energy difference counts as a rejection and an incident.
pub fn hmc_draw(
    chain: &mut ChainState,
    prob: &dyn Problem,
    g: &KineticMetric,
    params: &HmcParams,
    rng: &mut RngStream,
) -> Result<Draw> {
    hmc_draw_with(chain, prob, g, params, rng, |x, len| params.integrator.integrate(x, prob, g, params.dt, len))
}

/// [`hmc_draw`] with the trajectory map supplied by the caller.
pub fn hmc_draw_with<F>(
    chain: &mut ChainState,
    prob: &dyn Problem,
    g: &KineticMetric,
    params: &HmcParams,
    rng: &mut RngStream,
    integrate: F,
) -> Result<Draw>
where
    F: Fn(&PhasePoint, usize) -> Result<PhasePoint>,
{
    params.validate()?;
    let d = chain.dim();
    check_dim(prob.dim(), d)?;
    check_dim(g.dim(), d)?;
    let p = g.sample_momentum(rng.normal_vec(d));
    let len = rng.int_inclusive(params.min_steps(), params.steps);
    let start = PhasePoint::raw(chain.position().clone(), p);

    let proposal = match evaluate_hamiltonian(&start, g, prob) {
        Ok(h0) => match integrate(&start, len) {
            Ok(end) => match evaluate_hamiltonian(&end, g, prob) {
                Ok(h1) => Some((end, h1 - h0)),
                Err(Error::NumericOverflow { .. }) => None,
                Err(e) => return Err(e),
            },
            Err(Error::Divergence { .. } | Error::NonFinite(_)) => None,
            Err(e) => return Err(e),
        },
        Err(Error::NumericOverflow { .. }) => None,
        Err(e) => return Err(e),
    };

    let draw = match proposal {
        Some((end, dh)) if dh.is_finite() => {
            let accept_prob = (-dh).exp().min(1.0);
            let accepted = rng.uniform() < accept_prob;
            let next = if accepted { end } else { start.flip_momentum() };
            chain.advance(next, accepted, accept_prob);
            Draw { accepted, accept_prob, delta_h: dh, trajectory_steps: len }
        }
        other => {
            chain.note_incident();
            chain.advance(start.flip_momentum(), false, 0.0);
            Draw {
                accepted: false,
                accept_prob: 0.0,
                delta_h: other.map_or(f64::NAN, |(_, dh)| dh),
                trajectory_steps: len,
            }
        }
    };
    Ok(draw)
}
