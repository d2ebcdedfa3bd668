//! Rate-table experiment: dissipative leapfrog and gradient flow on
//! certifiable objectives, with power-law or exponential fits of the gap.

use std::collections::BTreeMap;

use geomint::integrators::{fit_rate_with, run_optimizer, FitOptions, Method, OptimizerConfig, RateModel};
use geomint::problems::{Quadratic, Quartic, Rosenbrock};
use geomint::samplers::RngStream;
use geomint::{DVector, KineticMetric, PhasePoint, Problem};

use crate::config::{ExperimentConfig, MethodSpec, MetricSpec, OptimizeParams, OptimizeRun, ProblemSpec};
use crate::report::{Environment, Repetition, Report};
use crate::{run_reps, write_file};

fn build_problem(spec: &ProblemSpec) -> anyhow::Result<Box<dyn Problem>> {
    Ok(match spec {
        ProblemSpec::Quadratic { curvatures } => {
            if curvatures.is_empty() || curvatures.iter().any(|c| !(*c > 0.0)) {
                anyhow::bail!("quadratic curvatures must be positive");
            }
            Box::new(Quadratic::diagonal(curvatures))
        }
        ProblemSpec::Quartic { dim } => Box::new(Quartic::new(*dim)),
        ProblemSpec::Rosenbrock { dim } => Box::new(Rosenbrock::new(*dim)),
    })
}

fn one_run(run: &OptimizeRun, rep: usize, seed: u64, out: &std::path::Path, r: &mut Repetition) -> anyhow::Result<()> {
    let prob = build_problem(&run.problem)?;
    let d = prob.dim();
    if run.initial_q.len() != d {
        anyhow::bail!("run {}: initial_q has {} entries, problem has dimension {d}", run.name, run.initial_q.len());
    }
    let mut q = DVector::from_column_slice(&run.initial_q);
    if rep > 0 && run.init_jitter > 0.0 {
        let mut rng = RngStream::new(seed).split(rep as u64);
        q += rng.normal_vec(d) * run.init_jitter;
    }
    let p = match &run.initial_p {
        Some(p) => DVector::from_column_slice(p),
        None => DVector::zeros(d),
    };
    let mut cfg = OptimizerConfig::new(run.step, run.num_steps, run.schedule, PhasePoint::new(q, p)?)
        .with_record_every(run.record_every);
    match run.metric {
        MetricSpec::Auto => {}
        MetricSpec::Identity => cfg = cfg.with_metric(KineticMetric::identity(d)),
        MetricSpec::Scaled { scale } => cfg = cfg.with_metric(KineticMetric::scaled_identity(d, scale)?),
    }
    let method = match run.method {
        MethodSpec::Leapfrog => Method::DissipativeLeapfrog,
        MethodSpec::GradientFlow => Method::GradientFlow,
    };
    let name = format!("{}_rep{rep}.csv", run.name);
    let (traj, failure) = match run_optimizer(&cfg, prob.as_ref(), method) {
        Ok(t) => (t, None),
        Err(f) => match f.partial {
            Some(t) => (*t, Some(f.source)),
            None => return Err(f.source.into()),
        },
    };
    r.files.push(write_file(out, &name, |w| Ok(traj.write_csv(w)?))?);
    if let Some(e) = failure {
        anyhow::bail!("run {}: {e} (partial trajectory in {name})", run.name);
    }
    let key = |m: &str| format!("{}.{m}", run.name);
    r.set(key("final_gap"), traj.final_gap().unwrap_or(f64::NAN));
    r.set(key("steps"), *traj.steps.last().unwrap_or(&0) as f64);
    if let Some(fit) = &run.fit {
        match fit_rate_with(&traj, fit.model, FitOptions { burn_in: fit.burn_in, ..FitOptions::default() }) {
            Ok(f) => {
                let coef = match fit.model {
                    RateModel::PowerLaw => "exponent",
                    RateModel::Exponential => "rate",
                };
                r.set(key(coef), f.coefficient);
                r.set(key("r2"), f.r2);
            }
            Err(e) => r.notes.push(format!("run {}: fit failed: {e}", run.name)),
        }
    }
    Ok(())
}

pub fn run(cfg: &ExperimentConfig<OptimizeParams>) -> anyhow::Result<Report> {
    std::fs::create_dir_all(&cfg.out)?;
    for run in &cfg.params.runs {
        build_problem(&run.problem)?;
        run.schedule.validate()?;
    }
    let reps = run_reps(cfg.exec, cfg.reps, |rep| {
        let mut r = Repetition::new(rep);
        for run in &cfg.params.runs {
            if let Err(e) = one_run(run, rep, cfg.seed, &cfg.out, &mut r) {
                r.error = Some(e.to_string());
                break;
            }
        }
        r
    });
    let mut substitutions = Vec::new();
    if cfg.params.runs.iter().any(|r| matches!(r.problem, ProblemSpec::Quartic { .. })) {
        substitutions.push("¼‖q‖⁴ stands in for a generic convex objective (minimum certified at 0)".to_string());
    }
    if cfg.params.runs.iter().any(|r| matches!(r.problem, ProblemSpec::Quadratic { .. })) {
        substitutions.push("diagonal quadratic stands in for a μ-strongly convex objective".to_string());
    }
    Ok(Report::new(
        &cfg.experiment,
        "optimize",
        Environment::capture(cfg.seed, cfg.reps),
        substitutions,
        cfg.checks.clone(),
        reps,
        BTreeMap::new(),
    ))
}
