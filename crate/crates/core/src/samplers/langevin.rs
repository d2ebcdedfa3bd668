//! Underdamped and overdamped Langevin steppers.

use nalgebra::DVector;

use super::hmc::leapfrog_trajectory;
use super::rng::RngStream;
use crate::error::{check_dim, Error, Result};
use crate::hamiltonian::{KineticMetric, PhasePoint, Problem};
use crate::integrators::gradient_flow_step;

/// Exact Ornstein–Uhlenbeck flow of `dp = −γp dt + sqrt(2γ/β) g^{1/2} dw` over `h`.
fn ou_half(p: &DVector<f64>, g: &KineticMetric, gamma: f64, beta: f64, h: f64, rng: &mut RngStream) -> DVector<f64> {
    let c = (-gamma * h).exp();
    // 1 − e^{−2γh}, computed without cancellation for small γh
    let sigma = (-(-2.0 * gamma * h).exp_m1() / beta).sqrt();
    let mut out = p * c;
    if sigma > 0.0 {
        out.axpy(sigma, &g.sample_momentum(rng.normal_vec(p.len())), 1.0);
    }
    out
}

/// Half OU, one leapfrog step, half OU. With `γ = 0` this is exactly one
/// leapfrog step and no random numbers are drawn. `β = ∞` turns the noise off.
pub fn underdamped_step(
    x: &PhasePoint,
    prob: &dyn Problem,
    g: &KineticMetric,
    dt: f64,
    gamma: f64,
    beta: f64,
    rng: &mut RngStream,
) -> Result<PhasePoint> {
    check_dim(prob.dim(), x.dim())?;
    if !(gamma >= 0.0) || !(beta > 0.0) {
        return Err(Error::Domain(format!("need gamma >= 0 and beta > 0, got {gamma} and {beta}")));
    }
    let h = 0.5 * dt;
    let p = ou_half(x.p(), g, gamma, beta, h, rng);
    let mid = leapfrog_trajectory(&PhasePoint::raw(x.q().clone(), p), prob, g, dt, 1)?;
    let (q, p) = mid.into_parts();
    let p = ou_half(&p, g, gamma, beta, h, rng);
    let next = PhasePoint::raw(q, p);
    next.ensure_finite()?;
    Ok(next)
}

/// Euler–Maruyama step `q − δt∇V(q) + sqrt(2δt/β)ξ`. `β = ∞` is the
/// deterministic gradient-flow step.
pub fn overdamped_em_step(
    q: &DVector<f64>,
    prob: &dyn Problem,
    dt: f64,
    beta: f64,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    if beta.is_infinite() {
        return gradient_flow_step(q, dt, prob);
    }
    check_dim(prob.dim(), q.len())?;
    let mut next = q - prob.grad(q) * dt;
    next.axpy((2.0 * dt / beta).sqrt(), &rng.normal_vec(q.len()), 1.0);
    if !next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("position".into()));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Constant, Quadratic, Quartic};

    #[test]
    fn zero_friction_is_leapfrog() {
        let prob = Quartic::new(2);
        let g = KineticMetric::scaled_identity(2, 1.5).unwrap();
        let x = PhasePoint::from_slices(&[0.4, -1.0], &[0.3, 0.2]).unwrap();
        let mut rng = RngStream::new(1);
        let before = rng.counter();
        let y = underdamped_step(&x, &prob, &g, 0.1, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(y, leapfrog_trajectory(&x, &prob, &g, 0.1, 1).unwrap());
        assert_eq!(rng.counter(), before);
    }

    #[test]
    fn noise_free_limit_is_damped_leapfrog() {
        let prob = Quadratic::isotropic(2, 2.0);
        let g = KineticMetric::identity(2);
        let x = PhasePoint::from_slices(&[1.0, 0.5], &[0.0, -0.2]).unwrap();
        let mut rng = RngStream::new(1);
        let (gamma, dt) = (0.8, 0.05);
        let y = underdamped_step(&x, &prob, &g, dt, gamma, f64::INFINITY, &mut rng).unwrap();
        let c = (-0.5 * gamma * dt).exp();
        let mid = PhasePoint::new(x.q().clone(), x.p() * c).unwrap();
        let (q, p) = leapfrog_trajectory(&mid, &prob, &g, dt, 1).unwrap().into_parts();
        let expected = PhasePoint::new(q, p * c).unwrap();
        assert!(y.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn free_particle_momentum_variance() {
        // Oracle: the OU stationary law of the momentum is N(0, g/β).
        let prob = Constant::new(1, 0.0);
        let g = KineticMetric::identity(1);
        let beta = 2.0;
        let mut x = PhasePoint::from_slices(&[0.0], &[0.0]).unwrap();
        let mut rng = RngStream::new(77);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        let n = 1_000_000;
        for _ in 0..1000 {
            x = underdamped_step(&x, &prob, &g, 0.1, 1.0, beta, &mut rng).unwrap();
        }
        for _ in 0..n {
            x = underdamped_step(&x, &prob, &g, 0.1, 1.0, beta, &mut rng).unwrap();
            sum += x.p()[0];
            sum_sq += x.p()[0] * x.p()[0];
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // Integrated autocorrelation time of p is about 1/(γ δt) = 10 steps.
        let se = 0.5 * (2.0 * 20.0 / n as f64).sqrt();
        assert!((var - 0.5).abs() < 4.0 * se, "var {var}");
    }

    #[test]
    fn em_zero_noise_is_gradient_flow() {
        let prob = Quartic::new(3);
        let q = DVector::from_column_slice(&[0.3, -1.2, 2.0]);
        let mut rng = RngStream::new(4);
        let a = overdamped_em_step(&q, &prob, 0.05, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(a, gradient_flow_step(&q, 0.05, &prob).unwrap());
    }

    fn em_variance(dt: f64, steps: usize, seed: u64) -> f64 {
        let prob = Quadratic::isotropic(1, 1.0);
        let mut rng = RngStream::new(seed);
        let mut q = DVector::zeros(1);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..steps {
            q = overdamped_em_step(&q, &prob, dt, 1.0, &mut rng).unwrap();
            sum += q[0];
            sum_sq += q[0] * q[0];
        }
        let mean = sum / steps as f64;
        sum_sq / steps as f64 - mean * mean
    }

    #[test]
    fn em_stationary_variance_bias() {
        // Oracle: q' = (1−δt)q + sqrt(2δt)ξ has stationary variance 1/(1 − δt/2).
        let v = em_variance(0.5, 1_000_000, 8);
        assert!((v / (4.0 / 3.0) - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn em_rejects_bad_beta() {
        let prob = Quadratic::isotropic(1, 1.0);
        let mut rng = RngStream::new(0);
        assert!(overdamped_em_step(&DVector::zeros(1), &prob, 0.1, 0.0, &mut rng).is_err());
    }
}
