//! Strict JSON experiment configs. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use geomint::samplers::Sampler;
use geomint::{DampingSchedule, Execution};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::report::Check;

/// Fields shared by every subcommand; the module block is `params`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig<P> {
    pub experiment: String,
    pub seed: u64,
    pub reps: usize,
    pub out: PathBuf,
    #[serde(default)]
    pub exec: Execution,
    pub params: P,
    #[serde(default)]
    pub checks: Vec<Check>,
}

impl<P: DeserializeOwned> ExperimentConfig<P> {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }
}

impl<P> ExperimentConfig<P> {
    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, reps: Option<usize>, out: Option<PathBuf>) -> anyhow::Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(r) = reps {
            self.reps = r;
        }
        if let Some(o) = out {
            self.out = o;
        }
        if self.reps == 0 {
            anyhow::bail!("reps must be at least 1");
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic { curvatures: Vec<f64> },
    Quartic { dim: usize },
    Rosenbrock { dim: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    Leapfrog,
    GradientFlow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    /// `g = δt·I`.
    Auto,
    Identity,
    Scaled { scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub model: geomint::integrators::RateModel,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
}

fn default_burn_in() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeRun {
    pub name: String,
    pub problem: ProblemSpec,
    pub method: MethodSpec,
    pub schedule: DampingSchedule,
    pub step: f64,
    pub num_steps: usize,
    pub metric: MetricSpec,
    pub initial_q: Vec<f64>,
    #[serde(default)]
    pub initial_p: Option<Vec<f64>>,
    /// Repetition `r > 0` adds `N(0, jitter²)` noise to the initial position.
    #[serde(default)]
    pub init_jitter: f64,
    #[serde(default = "one_usize")]
    pub record_every: usize,
    #[serde(default)]
    pub fit: Option<FitSpec>,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeParams {
    pub runs: Vec<OptimizeRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSpec {
    pub c: Vec<f64>,
    pub dt: f64,
    pub gamma: f64,
    pub num_steps: usize,
    pub initial_q: Vec<f64>,
    pub initial_p: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldParams {
    /// Group size; `Tr(CQ)` on SO(n) with `C_ij ~ N(0, 1/n)` per repetition.
    pub n: usize,
    pub dt: f64,
    pub g: f64,
    pub gammas: Vec<f64>,
    pub target_gap: f64,
    pub max_steps: usize,
    #[serde(default = "hundred")]
    pub record_every: usize,
    #[serde(default)]
    pub sphere: Option<SphereSpec>,
}

fn hundred() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `N(0, I_d)`.
    Gaussian { dim: usize },
    GaussianMixture { weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64> },
    Banana {
        #[serde(default = "one_f")]
        a: f64,
        #[serde(default = "half")]
        b: f64,
    },
}

fn one_f() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsdCurveSpec {
    pub sizes: Vec<usize>,
    pub bandwidth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmBiasSpec {
    pub dts: Vec<f64>,
    pub steps: usize,
    #[serde(default = "thousand")]
    pub burn_in: usize,
}

fn thousand() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleParams {
    pub target: TargetSpec,
    pub sampler: Sampler,
    pub chains: usize,
    pub draws: usize,
    pub burn_in: usize,
    #[serde(default)]
    pub keep_momenta: bool,
    #[serde(default)]
    pub ksd_curve: Option<KsdCurveSpec>,
    /// Runs on `N(0, 1)`, where the stationary variance is known in closed form.
    #[serde(default)]
    pub em_bias: Option<EmBiasSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelChoice {
    Gaussian { bandwidth: f64 },
    /// Gaussian with the median-heuristic bandwidth of the first sample.
    Median,
    InverseMultiquadric { c: f64, beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Estimator {
    /// MMD U-statistic between the first and second half of the sample.
    MmdHalves { kernel: KernelChoice },
    /// MMD U-statistic against a second sample file.
    Mmd { other: PathBuf, kernel: KernelChoice },
    /// KSD U-statistic against `N(mean, I)`.
    Ksd { mean: Vec<f64>, kernel: KernelChoice },
    /// Score-matching objective for `N(theta, I)`.
    Sm { theta: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    pub init: Vec<f64>,
    pub step: f64,
    pub iterations: usize,
    pub mc_samples: usize,
    /// Defaults to `1e-8 · tr(G)/dim`.
    #[serde(default)]
    pub ridge: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancyParams {
    pub samples: PathBuf,
    /// Keep every `thin`-th row.
    #[serde(default = "one_usize")]
    pub thin: usize,
    pub estimators: Vec<Estimator>,
    /// Score-matching natural-gradient fit of the Gaussian location model.
    #[serde(default)]
    pub fit: Option<FitBlock>,
}
