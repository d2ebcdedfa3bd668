//! Reports and verdicts. Verdicts are a pure function of the declared checks
//! and the stored per-repetition metrics, so a saved report can be re-judged.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    #[default]
    Median,
    Min,
    Max,
}

/// A threshold declared in the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// `min ≤ stat(metric) ≤ max` over repetitions.
    Bounds {
        metric: String,
        #[serde(default)]
        stat: Stat,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    /// Medians of the listed metrics strictly decrease in order.
    Decreasing { metrics: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub observed: Vec<Option<f64>>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub rep: usize,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<String>,
    #[serde(default)]
    pub error: Option<String>,
    /// Non-fatal problems, e.g. a rate fit with too few positive gaps.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Repetition {
    pub fn new(rep: usize) -> Self {
        Self { rep, ..Default::default() }
    }

    /// Records a metric; non-finite values are left out so that checks on them fail.
    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        if value.is_finite() {
            self.metrics.insert(name.into(), value);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub seed: u64,
    pub reps: usize,
    pub parallel_feature: bool,
    pub threads: usize,
}

impl Environment {
    pub fn capture(seed: u64, reps: usize) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            reps,
            parallel_feature: geomint::Execution::Parallel.is_parallel(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub command: String,
    pub environment: Environment,
    /// Desk-scale stand-ins for large experiments, labelled per run.
    pub substitutions: Vec<String>,
    pub checks: Vec<Check>,
    pub repetitions: Vec<Repetition>,
    /// Metrics computed once per experiment rather than per repetition.
    #[serde(default)]
    pub shared: BTreeMap<String, f64>,
    pub aggregate: BTreeMap<String, Summary>,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
    pub errors: Vec<String>,
}

impl Report {
    pub fn new(
        experiment: &str,
        command: &str,
        environment: Environment,
        substitutions: Vec<String>,
        checks: Vec<Check>,
        repetitions: Vec<Repetition>,
        shared: BTreeMap<String, f64>,
    ) -> Self {
        let errors: Vec<String> = repetitions
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| format!("rep {}: {e}", r.rep)))
            .collect();
        let aggregate = aggregate(&repetitions, &shared);
        let verdicts = evaluate(&checks, &repetitions, &shared);
        let pass = verdicts.iter().all(|v| v.pass);
        Self {
            experiment: experiment.to_string(),
            command: command.to_string(),
            environment,
            substitutions,
            checks,
            repetitions,
            shared,
            aggregate,
            verdicts,
            pass,
            errors,
        }
    }

    /// Recomputes verdicts from the stored checks and metrics.
    pub fn reevaluate(&self) -> Vec<Verdict> {
        evaluate(&self.checks, &self.repetitions, &self.shared)
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Values of `metric` across repetitions, or the shared value.
fn values(metric: &str, reps: &[Repetition], shared: &BTreeMap<String, f64>) -> Vec<f64> {
    if let Some(v) = shared.get(metric) {
        return vec![*v];
    }
    reps.iter().filter_map(|r| r.metrics.get(metric).copied()).collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(v: &[f64]) -> Option<Summary> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
    Some(Summary {
        n: s.len(),
        median: quantile(&s, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        min: s[0],
        max: s[s.len() - 1],
    })
}

fn aggregate(reps: &[Repetition], shared: &BTreeMap<String, f64>) -> BTreeMap<String, Summary> {
    let mut names: Vec<&String> = reps.iter().flat_map(|r| r.metrics.keys()).collect();
    names.sort();
    names.dedup();
    let mut out = BTreeMap::new();
    for name in names {
        if let Some(s) = summarize(&values(name, reps, shared)) {
            out.insert(name.clone(), s);
        }
    }
    out
}

fn stat_of(v: &[f64], stat: Stat) -> Option<f64> {
    let s = summarize(v)?;
    Some(match stat {
        Stat::Median => s.median,
        Stat::Min => s.min,
        Stat::Max => s.max,
    })
}

pub fn evaluate(checks: &[Check], reps: &[Repetition], shared: &BTreeMap<String, f64>) -> Vec<Verdict> {
    checks
        .iter()
        .map(|c| match c {
            Check::Bounds { metric, stat, min, max } => {
                let observed = stat_of(&values(metric, reps, shared), *stat);
                let pass = observed.is_some_and(|x| {
                    x.is_finite() && min.is_none_or(|lo| x >= lo) && max.is_none_or(|hi| x <= hi)
                });
                let fmt = |b: Option<f64>| b.map_or("-".to_string(), |x| format!("{x}"));
                Verdict {
                    check: format!("{} {metric} in [{}, {}]", format!("{stat:?}").to_lowercase(), fmt(*min), fmt(*max)),
                    observed: vec![observed],
                    pass,
                }
            }
            Check::Decreasing { metrics } => {
                let observed: Vec<Option<f64>> =
                    metrics.iter().map(|m| stat_of(&values(m, reps, shared), Stat::Median)).collect();
                let pass = observed.iter().all(Option::is_some)
                    && observed.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a));
                Verdict {
                    check: format!("median decreasing: {}", metrics.join(" > ")),
                    observed,
                    pass,
                }
            }
        })
        .collect()
}
