//! Discrepancy experiment: estimators on a sample file, and an optional
//! score-matching natural-gradient fit of the Gaussian location model.

use std::collections::BTreeMap;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use geomint::discrepancy::{
    default_ridge, ksd_u_statistic, mmd_u_statistic, natural_gradient_step, sm_estimate, sm_gradient, sm_information,
    GaussianLocation, KernelSpec, ScoreModel, SmOptions, Statistic,
};
use geomint::samplers::{read_samples_csv, RngStream};
use geomint::{DVector, Execution};
use serde::Serialize;

use crate::config::{DiscrepancyParams, Estimator, ExperimentConfig, FitBlock, KernelChoice};
use crate::report::{Environment, Repetition, Report};
use crate::{run_reps, write_file};

pub const ESTIMATES_FILE: &str = "estimates.json";

/// One estimator result as written to `estimates.json`.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateRecord {
    pub estimator: String,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub config: Estimator,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_positions(path: &Path, thin: usize) -> anyhow::Result<Vec<DVector<f64>>> {
    let f = std::fs::File::open(path).map_err(|e| anyhow::anyhow!("opening {}: {e}", path.display()))?;
    let file = read_samples_csv(BufReader::new(f)).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(file.positions().into_iter().step_by(thin).collect())
}

fn kernel(choice: &KernelChoice, xs: &[DVector<f64>]) -> anyhow::Result<KernelSpec> {
    Ok(match choice {
        KernelChoice::Gaussian { bandwidth } => KernelSpec::gaussian(*bandwidth)?,
        KernelChoice::Median => KernelSpec::gaussian_median(xs)?,
        KernelChoice::InverseMultiquadric { c, beta } => KernelSpec::imq(*c, *beta)?,
    })
}

fn vector(v: &[f64], d: usize, what: &str) -> anyhow::Result<DVector<f64>> {
    if v.len() != d {
        anyhow::bail!("{what} has {} entries, samples have dimension {d}", v.len());
    }
    Ok(DVector::from_column_slice(v))
}

fn estimate(e: &Estimator, xs: &[DVector<f64>], base: &Path, thin: usize, exec: Execution) -> anyhow::Result<Statistic> {
    let d = xs[0].len();
    Ok(match e {
        Estimator::MmdHalves { kernel: kc } => {
            let (a, b) = xs.split_at(xs.len() / 2);
            mmd_u_statistic(a, b, &kernel(kc, xs)?, exec)?
        }
        Estimator::Mmd { other, kernel: kc } => {
            let ys = load_positions(&resolve(base, other), thin)?;
            mmd_u_statistic(xs, &ys, &kernel(kc, xs)?, exec)?
        }
        Estimator::Ksd { mean, kernel: kc } => {
            let mu = vector(mean, d, "ksd mean")?;
            ksd_u_statistic(xs, |x: &DVector<f64>| &mu - x, &kernel(kc, xs)?, exec)?
        }
        Estimator::Sm { theta } => {
            let th = vector(theta, d, "sm theta")?;
            sm_estimate(xs, &GaussianLocation::standard(d), &th, &SmOptions::default())?
        }
    })
}

fn kind(e: &Estimator) -> &'static str {
    match e {
        Estimator::MmdHalves { .. } => "mmd_halves",
        Estimator::Mmd { .. } => "mmd",
        Estimator::Ksd { .. } => "ksd",
        Estimator::Sm { .. } => "sm",
    }
}

/// Metric prefixes: the estimator kind, suffixed by its index when repeated.
fn labels(es: &[Estimator]) -> Vec<String> {
    es.iter()
        .enumerate()
        .map(|(i, e)| {
            let k = kind(e);
            if es.iter().filter(|o| kind(o) == k).count() > 1 {
                format!("{k}_{i}")
            } else {
                k.to_string()
            }
        })
        .collect()
}

fn fit(block: &FitBlock, xs: &[DVector<f64>], rep: usize, seed: u64, out: &Path, r: &mut Repetition) -> anyhow::Result<()> {
    let d = xs[0].len();
    let model = GaussianLocation::standard(d);
    let opts = SmOptions::default();
    let mean = xs.iter().fold(DVector::zeros(d), |acc, x| acc + x) / xs.len() as f64;
    let mut rng = RngStream::new(seed).split(rep as u64);
    let mut theta = vector(&block.init, d, "fit init")?;
    let mut errors = vec![(&theta - &mean).amax()];
    for _ in 0..block.iterations {
        let grad = sm_gradient(xs, &model, &theta, &opts)?;
        let mc: Vec<DVector<f64>> = (0..block.mc_samples)
            .map(|_| model.sample(&theta, &mut rng).expect("Gaussian location model samples"))
            .collect();
        let g = sm_information(&model, &theta, &mc, None)?;
        if let Some(w) = &g.warning {
            r.notes.push(w.clone());
        }
        let ridge = block.ridge.unwrap_or_else(|| default_ridge(&g.matrix));
        theta = natural_gradient_step(&theta, &grad, &g.matrix, block.step, ridge)?;
        errors.push((&theta - &mean).amax());
    }
    let name = format!("fit_rep{rep}.csv");
    r.files.push(write_file(out, &name, |w| {
        writeln!(w, "iteration,max_abs_error")?;
        for (i, e) in errors.iter().enumerate() {
            writeln!(w, "{i},{e}")?;
        }
        Ok(())
    })?);
    let hit = errors.iter().position(|e| *e < 1e-6).unwrap_or(block.iterations + 1);
    r.set("fit.final_error", *errors.last().unwrap());
    r.set("fit.iterations_to_1e-6", hit as f64);
    Ok(())
}

/// Relative sample paths resolve against `base`, normally the config's directory.
pub fn run(cfg: &ExperimentConfig<DiscrepancyParams>, base: &Path) -> anyhow::Result<Report> {
    let p = &cfg.params;
    if p.thin == 0 {
        anyhow::bail!("thin must be at least 1");
    }
    let xs = load_positions(&resolve(base, &p.samples), p.thin)?;
    if xs.len() < 4 {
        anyhow::bail!("need at least 4 samples, got {}", xs.len());
    }
    std::fs::create_dir_all(&cfg.out)?;

    // Estimators are deterministic in the samples, so they run once.
    let mut shared = BTreeMap::new();
    let mut records = Vec::with_capacity(p.estimators.len());
    for (e, label) in p.estimators.iter().zip(labels(&p.estimators)) {
        let s = estimate(e, &xs, base, p.thin, cfg.exec)?;
        for (k, v) in [("value", s.value), ("stderr", s.stderr), ("z", s.value / s.stderr)] {
            if v.is_finite() {
                shared.insert(format!("{label}.{k}"), v);
            }
        }
        records.push(EstimateRecord { estimator: label, value: s.value, stderr: s.stderr, n: s.n, config: e.clone() });
    }
    write_file(&cfg.out, ESTIMATES_FILE, |w| {
        serde_json::to_writer_pretty(&mut *w, &records)?;
        writeln!(w)?;
        Ok(())
    })?;

    let reps = run_reps(cfg.exec, cfg.reps, |rep| {
        let mut r = Repetition::new(rep);
        if let Some(block) = &p.fit {
            if let Err(e) = fit(block, &xs, rep, cfg.seed, &cfg.out, &mut r) {
                r.error = Some(e.to_string());
            }
        }
        r
    });
    Ok(Report::new(
        &cfg.experiment,
        "discrepancy",
        Environment::capture(cfg.seed, cfg.reps),
        Vec::new(),
        cfg.checks.clone(),
        reps,
        shared,
    ))
}
