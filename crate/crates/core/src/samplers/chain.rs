//! Chain state, moment accumulators and the multi-chain driver.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::hmc::{hmc_draw, HmcParams};
use super::langevin::{overdamped_em_step, underdamped_step};
use super::rng::RngStream;
use crate::error::{Error, Result};
use crate::hamiltonian::{KineticMetric, PhasePoint, Problem};
use crate::parallel::{map_indexed, Execution};

/// Current state of one chain plus running statistics of its positions.
#[derive(Clone, Debug)]
pub struct ChainState {
    state: PhasePoint,
    steps: u64,
    accepted: u64,
    accept_prob_sum: f64,
    incidents: u64,
    samples: u64,
    mean: DVector<f64>,
    m2: DVector<f64>,
}

impl ChainState {
    /// Chain at `q0` with zero momentum and empty statistics.
    pub fn new(q0: DVector<f64>) -> Result<Self> {
        Self::from_phase(PhasePoint::at_rest(q0)?)
    }

    pub fn from_phase(state: PhasePoint) -> Result<Self> {
        state.ensure_finite()?;
        let d = state.dim();
        Ok(Self {
            state,
            steps: 0,
            accepted: 0,
            accept_prob_sum: 0.0,
            incidents: 0,
            samples: 0,
            mean: DVector::zeros(d),
            m2: DVector::zeros(d),
        })
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn position(&self) -> &DVector<f64> {
        self.state.q()
    }

    pub fn phase(&self) -> &PhasePoint {
        &self.state
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn incidents(&self) -> u64 {
        self.incidents
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    /// Average Metropolis acceptance probability, a lower-variance proxy for
    /// the acceptance rate.
    pub fn mean_accept_prob(&self) -> f64 {
        if self.steps == 0 {
            f64::NAN
        } else {
            self.accept_prob_sum / self.steps as f64
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Population variance of the recorded positions.
    pub fn variance(&self) -> DVector<f64> {
        if self.samples == 0 {
            return DVector::from_element(self.dim(), f64::NAN);
        }
        &self.m2 / self.samples as f64
    }

    pub fn second_moment(&self) -> DVector<f64> {
        self.variance() + self.mean.component_mul(&self.mean)
    }

    /// Moves to `next`, updates the tallies and records its position.
    pub fn advance(&mut self, next: PhasePoint, accepted: bool, accept_prob: f64) {
        self.state = next;
        self.steps += 1;
        if accepted {
            self.accepted += 1;
        }
        self.accept_prob_sum += accept_prob;
        self.samples += 1;
        let n = self.samples as f64;
        for i in 0..self.dim() {
            let x = self.state.q()[i];
            let delta = x - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x - self.mean[i]);
        }
    }

    pub fn note_incident(&mut self) {
        self.incidents += 1;
    }

    /// Drops every tally and accumulator but keeps the current state, e.g. after burn-in.
    pub fn reset_statistics(&mut self) {
        let d = self.dim();
        self.steps = 0;
        self.accepted = 0;
        self.accept_prob_sum = 0.0;
        self.incidents = 0;
        self.samples = 0;
        self.mean = DVector::zeros(d);
        self.m2 = DVector::zeros(d);
    }
}

/// Transition kernel driving a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampler {
    Hmc(HmcParams),
    Underdamped {
        dt: f64,
        gamma: f64,
        #[serde(default = "one")]
        beta: f64,
    },
    OverdampedEm {
        dt: f64,
        #[serde(default = "one")]
        beta: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Hmc(_) => "hmc",
            Sampler::Underdamped { .. } => "underdamped",
            Sampler::OverdampedEm { .. } => "overdamped_em",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Sampler::Hmc(params) => params.validate(),
            Sampler::Underdamped { dt, gamma, beta } => {
                if !(*dt > 0.0 && dt.is_finite()) || !(*gamma >= 0.0 && gamma.is_finite()) || !(*beta > 0.0) {
                    return Err(Error::InvalidConfig("underdamped Langevin needs dt > 0, gamma >= 0, beta > 0".into()));
                }
                Ok(())
            }
            Sampler::OverdampedEm { dt, beta } => {
                if !(*dt > 0.0 && dt.is_finite()) || !(*beta > 0.0) {
                    return Err(Error::InvalidConfig("Euler-Maruyama needs dt > 0 and beta > 0".into()));
                }
                Ok(())
            }
        }
    }

    /// One transition. Langevin moves are always counted as accepted.
    pub fn transition(
        &self,
        chain: &mut ChainState,
        prob: &dyn Problem,
        g: &KineticMetric,
        rng: &mut RngStream,
    ) -> Result<bool> {
        let step = chain.steps() as usize + 1;
        self.transition_inner(chain, prob, g, rng).map_err(|e| match e {
            Error::NonFinite(_) | Error::Divergence { .. } => Error::Divergence { step },
            other => other,
        })
    }

    fn transition_inner(
        &self,
        chain: &mut ChainState,
        prob: &dyn Problem,
        g: &KineticMetric,
        rng: &mut RngStream,
    ) -> Result<bool> {
        match self {
            Sampler::Hmc(params) => Ok(hmc_draw(chain, prob, g, params, rng)?.accepted),
            Sampler::Underdamped { dt, gamma, beta } => {
                let next = underdamped_step(chain.phase(), prob, g, *dt, *gamma, *beta, rng)?;
                chain.advance(next, true, 1.0);
                Ok(true)
            }
            Sampler::OverdampedEm { dt, beta } => {
                let q = overdamped_em_step(chain.position(), prob, *dt, *beta, rng)?;
                chain.advance(PhasePoint::at_rest(q)?, true, 1.0);
                Ok(true)
            }
        }
    }
}

/// One recorded transition.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub step: u64,
    pub accepted: bool,
    pub q: DVector<f64>,
    pub p: Option<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct ChainRun {
    pub state: ChainState,
    pub rows: Vec<SampleRow>,
}

#[derive(Clone, Debug)]
pub struct ChainsConfig {
    pub sampler: Sampler,
    pub metric: KineticMetric,
    pub draws: usize,
    pub burn_in: usize,
    /// Keep every post-burn-in row (otherwise only the statistics survive).
    pub keep_rows: bool,
    pub keep_momenta: bool,
    pub exec: Execution,
}

/// Runs one chain per initial position. Chain `i` draws from
/// `RngStream::new(seed).split(i)`, so results do not depend on scheduling.
pub fn run_chains(
    prob: &dyn Problem,
    cfg: &ChainsConfig,
    inits: &[DVector<f64>],
    seed: u64,
) -> Result<Vec<ChainRun>> {
    cfg.sampler.validate()?;
    let root = RngStream::new(seed);
    let runs = map_indexed(cfg.exec, inits.len(), |i| -> Result<ChainRun> {
        let mut rng = root.split(i as u64);
        let mut state = ChainState::new(inits[i].clone())?;
        for _ in 0..cfg.burn_in {
            cfg.sampler.transition(&mut state, prob, &cfg.metric, &mut rng)?;
        }
        state.reset_statistics();
        let mut rows = Vec::with_capacity(if cfg.keep_rows { cfg.draws } else { 0 });
        for _ in 0..cfg.draws {
            let accepted = cfg.sampler.transition(&mut state, prob, &cfg.metric, &mut rng)?;
            if cfg.keep_rows {
                rows.push(SampleRow {
                    step: state.steps(),
                    accepted,
                    q: state.position().clone(),
                    p: cfg.keep_momenta.then(|| state.phase().p().clone()),
                });
            }
        }
        Ok(ChainRun { state, rows })
    });
    runs.into_iter().collect()
}

/// Pooled moments over several chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub coordinate: usize,
    pub mean: f64,
    pub variance: f64,
}

pub fn pooled_moments(states: &[&ChainState]) -> Vec<MomentRow> {
    let Some(first) = states.first() else { return Vec::new() };
    let d = first.dim();
    let n: f64 = states.iter().map(|s| s.samples() as f64).sum();
    (0..d)
        .map(|i| {
            let mean = states.iter().map(|s| s.samples() as f64 * s.mean()[i]).sum::<f64>() / n;
            let second = states.iter().map(|s| s.samples() as f64 * s.second_moment()[i]).sum::<f64>() / n;
            MomentRow { coordinate: i + 1, mean, variance: second - mean * mean }
        })
        .collect()
}
