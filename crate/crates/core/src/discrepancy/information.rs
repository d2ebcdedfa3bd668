//! Monte Carlo information tensors and the natural-gradient update.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::check_samples;
use super::kernel::KernelSpec;
use super::score::ScoreModel;
use crate::error::{check_dim, Error, Result};
use crate::parallel::{map_indexed, Execution};

pub const MIN_MC_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InformationKind {
    Sm,
    Ksd,
    Mmd,
}

/// Symmetrised estimate plus a warning when it is visibly indefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct InformationTensor {
    pub matrix: DMatrix<f64>,
    pub warning: Option<String>,
}

impl InformationTensor {
    fn from_raw(raw: DMatrix<f64>) -> Result<Self> {
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("information tensor".into()));
        }
        let matrix = (&raw + raw.transpose()) * 0.5;
        let trace = matrix.trace();
        let min = matrix.clone().symmetric_eigenvalues().min();
        let warning = (min < -1e-8 * trace.abs())
            .then(|| format!("information tensor is not positive semidefinite (eigenvalue {min:.3e}, trace {trace:.3e})"));
        Ok(Self { matrix, warning })
    }
}

/// Generator `T_θ` pushing a base measure forward.
pub trait Generator: Send + Sync {
    fn dim(&self) -> usize;

    fn num_params(&self) -> usize;

    fn push(&self, u: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;

    /// `∂_θ T_θ(u)` as a `d×p` matrix.
    fn jacobian(&self, u: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;
}

/// `T_θ(u) = u + θ`.
#[derive(Clone, Copy, Debug)]
pub struct TranslationGenerator {
    pub dim: usize,
}

impl Generator for TranslationGenerator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_params(&self) -> usize {
        self.dim
    }

    fn push(&self, u: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        u + theta
    }

    fn jacobian(&self, _u: &DVector<f64>, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

fn check_mc(xs: &[DVector<f64>]) -> Result<usize> {
    if xs.len() < MIN_MC_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_MC_SAMPLES, got: xs.len() });
    }
    check_samples(xs, MIN_MC_SAMPLES)
}

fn m_matrix(b: Option<&DMatrix<f64>>, d: usize) -> Result<DMatrix<f64>> {
    match b {
        None => Ok(DMatrix::identity(d, d)),
        Some(b) if b.nrows() == d => Ok(b * b.transpose()),
        Some(b) => Err(Error::DimensionMismatch { expected: d, got: b.nrows() }),
    }
}

/// Sum over ordered distinct pairs of `f(i, j)`, averaged. Rows are reduced in index order.
fn pair_mean(exec: Execution, n: usize, p: usize, f: impl Fn(usize, usize) -> DMatrix<f64> + Sync + Send) -> DMatrix<f64> {
    let rows = map_indexed(exec, n, |i| {
        let mut acc = DMatrix::zeros(p, p);
        for j in 0..n {
            if j != i {
                acc += f(i, j);
            }
        }
        acc
    });
    let mut total = DMatrix::zeros(p, p);
    for r in rows {
        total += r;
    }
    total / (n * (n - 1)) as f64
}

/// `G_ij = E_{x∼q_θ}[(Bᵀ∂ₓ∂_{θ_i} log q)·(Bᵀ∂ₓ∂_{θ_j} log q)]` from model samples.
pub fn sm_information(
    model: &dyn ScoreModel,
    theta: &DVector<f64>,
    samples: &[DVector<f64>],
    b: Option<&DMatrix<f64>>,
) -> Result<InformationTensor> {
    let d = check_mc(samples)?;
    check_dim(model.dim(), d)?;
    check_dim(model.num_params(), theta.len())?;
    let m = m_matrix(b, d)?;
    let p = model.num_params();
    let mut acc = DMatrix::zeros(p, p);
    for x in samples {
        let j = model.score_theta(x, theta);
        acc += j.transpose() * &m * &j;
    }
    InformationTensor::from_raw(acc / samples.len() as f64)
}

/// `G_ij = E_{x,y∼q_θ}[(∂ₓ∂_{θ_j} log q(x))ᵀ B k(x,y) Bᵀ ∂ₓ∂_{θ_i} log q(y)]`,
/// averaged over ordered distinct sample pairs.
pub fn ksd_information(
    model: &dyn ScoreModel,
    theta: &DVector<f64>,
    samples: &[DVector<f64>],
    k: &KernelSpec,
    b: Option<&DMatrix<f64>>,
    exec: Execution,
) -> Result<InformationTensor> {
    k.validate()?;
    let d = check_mc(samples)?;
    check_dim(model.dim(), d)?;
    check_dim(model.num_params(), theta.len())?;
    let m = m_matrix(b, d)?;
    let js: Vec<DMatrix<f64>> = samples.iter().map(|x| model.score_theta(x, theta)).collect();
    let left: Vec<DMatrix<f64>> = js.iter().map(|j| j.transpose() * &m).collect();
    let raw = pair_mean(exec, samples.len(), model.num_params(), |i, j| {
        // entry (a, c) = J(x_i)_{:,a}ᵀ M J(x_j)_{:,c} k(x_i, x_j); the (i,j) ↔ (j,i)
        // pairing gives the transpose, so the symmetrised sum is the tensor.
        &left[i] * &js[j] * k.eval(samples[i].as_slice(), samples[j].as_slice())
    });
    InformationTensor::from_raw(raw)
}

/// `G_ij = E_{u,v}[∂_θT(u)ᵀ ∂ₓ∂_y k(T(u), T(v)) ∂_θT(v)]` from base-measure samples.
pub fn mmd_information(
    generator: &dyn Generator,
    theta: &DVector<f64>,
    base: &[DVector<f64>],
    k: &KernelSpec,
    exec: Execution,
) -> Result<InformationTensor> {
    k.validate()?;
    check_mc(base)?;
    check_dim(generator.num_params(), theta.len())?;
    let pushed: Vec<DVector<f64>> = base.iter().map(|u| generator.push(u, theta)).collect();
    for x in &pushed {
        check_dim(generator.dim(), x.len())?;
    }
    let jacs: Vec<DMatrix<f64>> = base.iter().map(|u| generator.jacobian(u, theta)).collect();
    let raw = pair_mean(exec, base.len(), generator.num_params(), |i, j| {
        jacs[i].transpose() * k.mixed_hessian(pushed[i].as_slice(), pushed[j].as_slice()) * &jacs[j]
    });
    InformationTensor::from_raw(raw)
}

/// Default ridge `1e-8 · tr(G) / dim`.
pub fn default_ridge(g: &DMatrix<f64>) -> f64 {
    1e-8 * g.trace() / g.nrows().max(1) as f64
}

/// `θ − γ (G + εI)⁻¹ ∇` via a Cholesky solve.
pub fn natural_gradient_step(
    theta: &DVector<f64>,
    grad: &DVector<f64>,
    g: &DMatrix<f64>,
    step: f64,
    ridge: f64,
) -> Result<DVector<f64>> {
    check_dim(theta.len(), grad.len())?;
    if g.shape() != (theta.len(), theta.len()) {
        return Err(Error::DimensionMismatch { expected: theta.len(), got: g.nrows() });
    }
    if !(step > 0.0) || !(ridge >= 0.0) {
        return Err(Error::Domain(format!("need step > 0 and ridge >= 0, got {step} and {ridge}")));
    }
    let mut reg = g.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge;
    }
    let chol = Cholesky::new(reg).ok_or_else(|| {
        Error::Conditioning(format!("G + {ridge:.3e}·I is not positive definite; increase the ridge"))
    })?;
    let dir = chol.solve(grad);
    if !dir.iter().all(|v| v.is_finite()) {
        return Err(Error::Conditioning("natural-gradient solve overflowed; increase the ridge".into()));
    }
    Ok(theta - dir * step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::{sm_gradient, GaussianLocation, SmOptions};
    use crate::samplers::RngStream;

    fn model_samples(n: usize, seed: u64, theta: f64) -> Vec<DVector<f64>> {
        let mut rng = RngStream::new(seed);
        (0..n).map(|_| DVector::from_element(1, theta + rng.normal())).collect()
    }

    #[test]
    fn sm_tensor_of_location_model_is_one() {
        let model = GaussianLocation::standard(1);
        let theta = DVector::from_element(1, 0.4);
        let t = sm_information(&model, &theta, &model_samples(200, 1, 0.4), None).unwrap();
        assert_eq!(t.matrix[(0, 0)], 1.0);
        assert!(t.warning.is_none());
    }

    #[test]
    fn ksd_tensor_wide_kernel_limit() {
        // As σ → ∞, k → 1 and G → (E J)ᵀ(E J) = 1 for the location model.
        let model = GaussianLocation::standard(1);
        let theta = DVector::from_element(1, 0.0);
        let k = KernelSpec::gaussian(1e3).unwrap();
        let t = ksd_information(&model, &theta, &model_samples(300, 2, 0.0), &k, None, Execution::Parallel).unwrap();
        assert!((t.matrix[(0, 0)] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn ksd_tensor_matches_quadrature() {
        // Oracle: for σ = 1 and x, y ~ N(θ, 1), E k(x, y) = 1/√3.
        let model = GaussianLocation::standard(1);
        let theta = DVector::from_element(1, 0.0);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let t = ksd_information(&model, &theta, &model_samples(2000, 3, 0.0), &k, None, Execution::Parallel).unwrap();
        assert!((t.matrix[(0, 0)] - 1.0 / 3f64.sqrt()).abs() < 0.02, "{}", t.matrix[(0, 0)]);
    }

    #[test]
    fn mmd_tensor_for_translation() {
        // Oracle: E[∂ₓ∂_y k] with z = x − y ~ N(0, 2) is E[e^{−z²/2}(1 − z²)] = 1/(3√3).
        let base = model_samples(2000, 4, 0.0);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let t = mmd_information(&TranslationGenerator { dim: 1 }, &DVector::from_element(1, 0.7), &base, &k, Execution::Parallel)
            .unwrap();
        let expected = 1.0 / (3.0 * 3f64.sqrt());
        // Projection stderr at n = 2000 is about 0.007; allow four of them.
        assert!((t.matrix[(0, 0)] - expected).abs() < 0.028, "{}", t.matrix[(0, 0)]);
    }

    #[test]
    fn too_few_mc_samples() {
        let model = GaussianLocation::standard(1);
        let theta = DVector::from_element(1, 0.0);
        assert!(matches!(
            sm_information(&model, &theta, &model_samples(99, 1, 0.0), None),
            Err(Error::InsufficientSamples { needed: 100, got: 99 })
        ));
    }

    #[test]
    fn indefinite_estimate_is_flagged() {
        let t = InformationTensor::from_raw(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5])).unwrap();
        assert!(t.warning.is_some());
    }

    #[test]
    fn ngd_examples() {
        let theta = DVector::from_column_slice(&[1.0, -2.0]);
        let v = DVector::from_column_slice(&[0.5, 0.25]);
        let eye = DMatrix::identity(2, 2);
        assert_eq!(natural_gradient_step(&theta, &v, &eye, 0.1, 0.0).unwrap(), &theta - &v * 0.1);
        let two = &eye * 2.0;
        assert_eq!(natural_gradient_step(&theta, &v, &two, 0.1, 0.0).unwrap(), &theta - &v * 0.05);
        let singular = DMatrix::zeros(2, 2);
        assert!(matches!(natural_gradient_step(&theta, &v, &singular, 0.1, 0.0), Err(Error::Conditioning(_))));
        assert!(natural_gradient_step(&theta, &v, &singular, 0.1, 1e-3).is_ok());
    }

    #[test]
    fn ngd_scale_invariance() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7]);
        let grad = DVector::from_column_slice(&[0.37, -1.21]);
        let theta = DVector::from_column_slice(&[0.1, 0.2]);
        let base = natural_gradient_step(&theta, &grad, &g, 0.5, default_ridge(&g)).unwrap();
        for c in [4.0, 0.25, 1024.0] {
            let gc = &g * c;
            let scaled = natural_gradient_step(&theta, &(&grad * c), &gc, 0.5, default_ridge(&gc)).unwrap();
            assert_eq!(scaled, base, "c = {c}");
        }
        for c in [3.0, 0.1, 7.5] {
            let gc = &g * c;
            let scaled = natural_gradient_step(&theta, &(&grad * c), &gc, 0.5, default_ridge(&gc)).unwrap();
            assert!((scaled - &base).amax() < 1e-14, "c = {c}");
        }
    }

    #[test]
    fn sm_ngd_recovers_sample_mean() {
        let model = GaussianLocation::standard(1);
        let xs = model_samples(200, 5, 1.3);
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / 200.0;
        let opts = SmOptions::default();
        let mut rng = RngStream::new(6);
        let mut theta = DVector::from_element(1, -2.0);
        let mut iters = 0;
        while (theta[0] - mean).abs() >= 1e-6 && iters < 50 {
            let draws: Vec<_> = (0..200).map(|_| model.sample(&theta, &mut rng).unwrap()).collect();
            let g = sm_information(&model, &theta, &draws, None).unwrap().matrix;
            let grad = sm_gradient(&xs, &model, &theta, &opts).unwrap();
            theta = natural_gradient_step(&theta, &grad, &g, 0.5, 0.0).unwrap();
            iters += 1;
        }
        assert!((theta[0] - mean).abs() < 1e-6);
        assert!(iters <= 50);
    }

    #[test]
    fn unit_step_sm_ngd_oscillates() {
        // G = 1 while the SM objective has curvature 2, so a unit step reflects θ through the mean.
        let model = GaussianLocation::standard(1);
        let xs = model_samples(200, 5, 1.3);
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / 200.0;
        let theta = DVector::from_element(1, mean - 1.0);
        let grad = sm_gradient(&xs, &model, &theta, &SmOptions::default()).unwrap();
        let next = natural_gradient_step(&theta, &grad, &DMatrix::identity(1, 1), 1.0, 0.0).unwrap();
        assert!((next[0] - (mean + 1.0)).abs() < 1e-12);
    }
}
