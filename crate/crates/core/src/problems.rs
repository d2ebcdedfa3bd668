//! Built-in objectives and negative log-densities.

use nalgebra::{DMatrix, DVector};

use crate::hamiltonian::{finite_difference_grad, Problem};

/// `f(q) = ½ (q − c)ᵀ A (q − c)`; with `A = Σ⁻¹` it is a Gaussian potential.
#[derive(Clone, Debug)]
pub struct Quadratic {
    a: DMatrix<f64>,
    center: DVector<f64>,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, center: DVector<f64>) -> Self {
        assert!(a.is_square() && a.nrows() == center.len());
        Self { a, center }
    }

    pub fn isotropic(dim: usize, curvature: f64) -> Self {
        Self::diagonal(&vec![curvature; dim])
    }

    pub fn diagonal(curvatures: &[f64]) -> Self {
        let d = curvatures.len();
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(curvatures)),
            DVector::zeros(d),
        )
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }
}

impl Problem for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        let r = q - &self.center;
        0.5 * r.dot(&(&self.a * &r))
    }

    fn grad(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.a * (q - &self.center)
    }

    fn hessian_vec(&self, _q: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(&self.a * v)
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn minimiser(&self) -> Option<DVector<f64>> {
        Some(self.center.clone())
    }

    fn name(&self) -> String {
        "quadratic".into()
    }
}

/// `f(q) = ¼ ‖q‖⁴`: convex, not strongly convex at its minimiser.
#[derive(Clone, Copy, Debug)]
pub struct Quartic {
    dim: usize,
}

impl Quartic {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Problem for Quartic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        let s = q.norm_squared();
        0.25 * s * s
    }

    fn grad(&self, q: &DVector<f64>) -> DVector<f64> {
        q * q.norm_squared()
    }

    fn hessian_vec(&self, q: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(v * q.norm_squared() + q * (2.0 * q.dot(v)))
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn minimiser(&self) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.dim))
    }

    fn name(&self) -> String {
        "quartic".into()
    }
}

/// Chained Rosenbrock `Σ 100 (q_{i+1} − q_i²)² + (1 − q_i)²`, minimum 0 at 1.
#[derive(Clone, Copy, Debug)]
pub struct Rosenbrock {
    dim: usize,
}

impl Rosenbrock {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2);
        Self { dim }
    }
}

impl Problem for Rosenbrock {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        (0..self.dim - 1)
            .map(|i| 100.0 * (q[i + 1] - q[i] * q[i]).powi(2) + (1.0 - q[i]).powi(2))
            .sum()
    }

    fn grad(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for i in 0..self.dim - 1 {
            let t = q[i + 1] - q[i] * q[i];
            g[i] += -400.0 * q[i] * t - 2.0 * (1.0 - q[i]);
            g[i + 1] += 200.0 * t;
        }
        g
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn minimiser(&self) -> Option<DVector<f64>> {
        Some(DVector::from_element(self.dim, 1.0))
    }

    fn name(&self) -> String {
        "rosenbrock".into()
    }
}

/// `f(q) = c`.
#[derive(Clone, Copy, Debug)]
pub struct Constant {
    dim: usize,
    value: f64,
}

impl Constant {
    pub fn new(dim: usize, value: f64) -> Self {
        Self { dim, value }
    }
}

impl Problem for Constant {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _q: &DVector<f64>) -> f64 {
        self.value
    }

    fn grad(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(self.value)
    }

    fn name(&self) -> String {
        "constant".into()
    }
}

/// `f(q) = c·q`; unbounded on ℝᵈ, used with constraints.
#[derive(Clone, Debug)]
pub struct Linear {
    c: DVector<f64>,
}

impl Linear {
    pub fn new(c: DVector<f64>) -> Self {
        Self { c }
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.c
    }
}

impl Problem for Linear {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        self.c.dot(q)
    }

    fn grad(&self, _q: &DVector<f64>) -> DVector<f64> {
        self.c.clone()
    }

    fn hessian_vec(&self, _q: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(v.len()))
    }

    fn name(&self) -> String {
        "linear".into()
    }
}

/// Negative log-density of a one-dimensional Gaussian mixture.
#[derive(Clone, Debug)]
pub struct GaussianMixture1d {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl GaussianMixture1d {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Self {
        assert!(weights.len() == means.len() && means.len() == sds.len() && !weights.is_empty());
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self { weights, means, sds }
    }

    /// Equal-weight mixture of `N(−μ, 1)` and `N(μ, 1)`.
    pub fn symmetric(mu: f64) -> Self {
        Self::new(vec![0.5, 0.5], vec![-mu, mu], vec![1.0, 1.0])
    }

    fn components(&self, x: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        // (component density, its derivative)
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(move |((w, m), s)| {
                let z = (x - m) / s;
                let dens = w * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
                (dens, -dens * z / s)
            })
    }

    pub fn density(&self, x: f64) -> f64 {
        self.components(x).map(|c| c.0).sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, mu), s)| w * (s * s + mu * mu))
            .sum::<f64>()
            - m * m
    }
}

impl Problem for GaussianMixture1d {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        -self.density(q[0]).ln()
    }

    fn grad(&self, q: &DVector<f64>) -> DVector<f64> {
        let (d, dd) = self
            .components(q[0])
            .fold((0.0, 0.0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
        DVector::from_element(1, -dd / d)
    }

    fn name(&self) -> String {
        "gaussian-mixture".into()
    }
}

/// Twisted Gaussian: `x₁ ~ N(0, a²)`, `x₂ | x₁ ~ N(b (x₁² − a²), 1)`.
#[derive(Clone, Copy, Debug)]
pub struct Banana {
    pub a: f64,
    pub b: f64,
}

impl Banana {
    pub fn mean(&self) -> [f64; 2] {
        [0.0, 0.0]
    }

    pub fn variance(&self) -> [f64; 2] {
        let a2 = self.a * self.a;
        [a2, 1.0 + 2.0 * self.b * self.b * a2 * a2]
    }
}

impl Default for Banana {
    fn default() -> Self {
        Self { a: 1.0, b: 0.5 }
    }
}

impl Problem for Banana {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        let a2 = self.a * self.a;
        let r = q[1] - self.b * (q[0] * q[0] - a2);
        0.5 * q[0] * q[0] / a2 + 0.5 * r * r
    }

    fn grad(&self, q: &DVector<f64>) -> DVector<f64> {
        let a2 = self.a * self.a;
        let r = q[1] - self.b * (q[0] * q[0] - a2);
        DVector::from_column_slice(&[q[0] / a2 - 2.0 * self.b * q[0] * r, r])
    }

    fn name(&self) -> String {
        "banana".into()
    }
}

/// Wraps a value-only objective with a central-difference gradient.
///
/// For testing only; reports flag it through `uses_finite_differences`.
pub struct FiniteDifferenceProblem<F> {
    dim: usize,
    f: F,
}

impl<F> FiniteDifferenceProblem<F>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Problem for FiniteDifferenceProblem<F>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        (self.f)(q)
    }

    fn grad(&self, q: &DVector<f64>) -> DVector<f64> {
        finite_difference_grad(&self.f, q)
    }

    fn name(&self) -> String {
        "finite-difference".into()
    }

    fn uses_finite_differences(&self) -> bool {
        true
    }
}
