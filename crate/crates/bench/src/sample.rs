//! Sampling experiment: chain moments and acceptance, a KSD-vs-n curve on
//! exact target draws, and the Euler–Maruyama variance bias on `N(0, 1)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use geomint::discrepancy::{ksd_u_statistic, KernelSpec};
use geomint::problems::{Banana, GaussianMixture1d, Quadratic};
use geomint::samplers::{pooled_moments, run_chains, write_samples_csv, ChainsConfig, RngStream, Sampler};
use geomint::{DVector, Execution, KineticMetric, Problem};

use crate::config::{EmBiasSpec, ExperimentConfig, KsdCurveSpec, SampleParams, TargetSpec};
use crate::report::{Environment, Repetition, Report};
use crate::{run_reps, tag, write_file};

/// Target density with exact moments and an exact sampler.
struct Target {
    prob: Box<dyn Problem>,
    mean: Vec<f64>,
    var: Vec<f64>,
    spec: TargetSpec,
}

impl Target {
    fn build(spec: &TargetSpec) -> anyhow::Result<Self> {
        let (prob, mean, var): (Box<dyn Problem>, _, _) = match spec {
            TargetSpec::Gaussian { dim } => {
                if *dim == 0 {
                    anyhow::bail!("gaussian target needs dim >= 1");
                }
                (Box::new(Quadratic::isotropic(*dim, 1.0)), vec![0.0; *dim], vec![1.0; *dim])
            }
            TargetSpec::GaussianMixture { weights, means, sds } => {
                let n = weights.len();
                if n == 0 || means.len() != n || sds.len() != n {
                    anyhow::bail!("mixture weights, means and sds must be non-empty and of equal length");
                }
                if weights.iter().any(|w| !(*w > 0.0)) || sds.iter().any(|s| !(*s > 0.0)) {
                    anyhow::bail!("mixture weights and sds must be positive");
                }
                let m = GaussianMixture1d::new(weights.clone(), means.clone(), sds.clone());
                let (mu, v) = (m.mean(), m.variance());
                (Box::new(m), vec![mu], vec![v])
            }
            TargetSpec::Banana { a, b } => {
                if !(*a > 0.0) || !b.is_finite() {
                    anyhow::bail!("banana needs a > 0 and finite b");
                }
                let t = Banana { a: *a, b: *b };
                (Box::new(t), t.mean().to_vec(), t.variance().to_vec())
            }
        };
        Ok(Self { prob, mean, var, spec: spec.clone() })
    }

    fn draw(&self, rng: &mut RngStream) -> DVector<f64> {
        match &self.spec {
            TargetSpec::Gaussian { dim } => rng.normal_vec(*dim),
            TargetSpec::GaussianMixture { weights, means, sds } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.uniform() * total;
                let mut k = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        k = i;
                        break;
                    }
                    u -= w;
                }
                DVector::from_element(1, means[k] + sds[k] * rng.normal())
            }
            TargetSpec::Banana { a, b } => {
                let x1 = a * rng.normal();
                let x2 = b * (x1 * x1 - a * a) + rng.normal();
                DVector::from_column_slice(&[x1, x2])
            }
        }
    }
}

fn chains(p: &SampleParams, t: &Target, rep: usize, seed: u64, out: &Path, r: &mut Repetition) -> anyhow::Result<()> {
    let d = t.prob.dim();
    let cfg = ChainsConfig {
        sampler: p.sampler.clone(),
        metric: KineticMetric::identity(d),
        draws: p.draws,
        burn_in: p.burn_in,
        keep_rows: true,
        keep_momenta: p.keep_momenta,
        // Repetitions already occupy the pool.
        exec: Execution::Sequential,
    };
    let inits = vec![DVector::from_column_slice(&t.mean); p.chains];
    let chain_seed = RngStream::new(seed).split(rep as u64).split(0).derive_seed();
    let runs = run_chains(t.prob.as_ref(), &cfg, &inits, chain_seed)?;
    let name = format!("samples_rep{rep}.csv");
    r.files.push(write_file(out, &name, |w| Ok(write_samples_csv(w, &runs, p.keep_momenta)?))?);

    let states: Vec<_> = runs.iter().map(|c| &c.state).collect();
    let moments = pooled_moments(&states);
    let name = format!("moments_rep{rep}.csv");
    r.files.push(write_file(out, &name, |w| {
        writeln!(w, "coordinate,mean,variance,target_mean,target_variance")?;
        for m in &moments {
            let i = m.coordinate - 1;
            writeln!(w, "{},{},{},{},{}", m.coordinate, m.mean, m.variance, t.mean[i], t.var[i])?;
        }
        Ok(())
    })?);
    let mean_err = moments.iter().map(|m| (m.mean - t.mean[m.coordinate - 1]).abs()).fold(0.0, f64::max);
    let var_err = moments.iter().map(|m| (m.variance - t.var[m.coordinate - 1]).abs()).fold(0.0, f64::max);
    let accepted: u64 = states.iter().map(|s| s.accepted()).sum();
    let steps: u64 = states.iter().map(|s| s.steps()).sum::<u64>().max(1);
    r.set("max_abs_mean_error", mean_err);
    r.set("max_abs_variance_error", var_err);
    r.set("acceptance", accepted as f64 / steps as f64);
    Ok(())
}

fn ksd_curve(spec: &KsdCurveSpec, t: &Target, rep: usize, seed: u64, out: &Path, r: &mut Repetition) -> anyhow::Result<()> {
    let k = KernelSpec::gaussian(spec.bandwidth)?;
    let mut rng = RngStream::new(seed).split(rep as u64).split(1);
    let score = |x: &DVector<f64>| -t.prob.grad(x);
    let mut rows = Vec::with_capacity(spec.sizes.len());
    for &m in &spec.sizes {
        let xs: Vec<DVector<f64>> = (0..m).map(|_| t.draw(&mut rng)).collect();
        let s = ksd_u_statistic(&xs, score, &k, Execution::Sequential)?;
        r.set(format!("ksd_abs_n{m}"), s.value.abs());
        rows.push((m, s));
    }
    let name = format!("ksd_curve_rep{rep}.csv");
    r.files.push(write_file(out, &name, |w| {
        writeln!(w, "n,value,stderr")?;
        for (m, s) in &rows {
            writeln!(w, "{m},{},{}", s.value, s.stderr)?;
        }
        Ok(())
    })?);
    Ok(())
}

fn em_bias(spec: &EmBiasSpec, rep: usize, seed: u64, out: &Path, r: &mut Repetition) -> anyhow::Result<()> {
    let prob = Quadratic::isotropic(1, 1.0);
    let mut rows = Vec::with_capacity(spec.dts.len());
    for (j, &dt) in spec.dts.iter().enumerate() {
        let cfg = ChainsConfig {
            sampler: Sampler::OverdampedEm { dt, beta: 1.0 },
            metric: KineticMetric::identity(1),
            draws: spec.steps,
            burn_in: spec.burn_in,
            keep_rows: false,
            keep_momenta: false,
            exec: Execution::Sequential,
        };
        let chain_seed = RngStream::new(seed).split(rep as u64).split(2 + j as u64).derive_seed();
        let run = run_chains(&prob, &cfg, &[DVector::zeros(1)], chain_seed)?;
        let var = run[0].state.variance()[0];
        let analytic = 1.0 / (1.0 - dt / 2.0);
        r.set(format!("em_variance_dt{}", tag(dt)), var);
        r.set(format!("em_relative_error_dt{}", tag(dt)), (var - analytic).abs() / analytic);
        r.set(format!("em_bias_dt{}", tag(dt)), (var - 1.0).abs());
        rows.push((dt, var, analytic));
    }
    let name = format!("em_bias_rep{rep}.csv");
    r.files.push(write_file(out, &name, |w| {
        writeln!(w, "dt,variance,analytic,bias")?;
        for (dt, v, a) in &rows {
            writeln!(w, "{dt},{v},{a},{}", v - 1.0)?;
        }
        Ok(())
    })?);
    Ok(())
}

pub fn run(cfg: &ExperimentConfig<SampleParams>) -> anyhow::Result<Report> {
    let p = &cfg.params;
    p.sampler.validate()?;
    if p.chains == 0 || p.draws == 0 {
        anyhow::bail!("need chains >= 1 and draws >= 1");
    }
    if let Some(e) = &p.em_bias {
        if e.dts.iter().any(|dt| !(*dt > 0.0 && *dt < 2.0)) || e.steps == 0 {
            anyhow::bail!("em_bias needs 0 < dt < 2 and steps >= 1");
        }
    }
    let target = Target::build(&p.target)?;
    std::fs::create_dir_all(&cfg.out)?;
    let reps = run_reps(cfg.exec, cfg.reps, |rep| {
        let mut r = Repetition::new(rep);
        let res = chains(p, &target, rep, cfg.seed, &cfg.out, &mut r)
            .and_then(|_| p.ksd_curve.as_ref().map_or(Ok(()), |s| ksd_curve(s, &target, rep, cfg.seed, &cfg.out, &mut r)))
            .and_then(|_| p.em_bias.as_ref().map_or(Ok(()), |s| em_bias(s, rep, cfg.seed, &cfg.out, &mut r)));
        if let Err(e) = res {
            r.error = Some(e.to_string());
        }
        r
    });
    Ok(Report::new(
        &cfg.experiment,
        "sample",
        Environment::capture(cfg.seed, cfg.reps),
        Vec::new(),
        cfg.checks.clone(),
        reps,
        BTreeMap::new(),
    ))
}
