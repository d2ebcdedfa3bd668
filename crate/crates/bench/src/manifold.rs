//! Manifold experiment: steps to a target gap on SO(n) for each damping
//! level, plus an optional dissipative RATTLE run on a sphere.

use std::collections::BTreeMap;
use std::path::Path;

use geomint::integrators::Termination;
use geomint::manifold::{
    run_lie, run_rattle, ConstraintSet, ForceMode, LieParams, LieRunConfig, MatrixGroupState, RattleRunConfig,
    Sphere, TraceLinear,
};
use geomint::problems::Linear;
use geomint::samplers::RngStream;
use geomint::{DMatrix, DVector, DampingSchedule, KineticMetric, PhasePoint};

use crate::config::{ExperimentConfig, ManifoldParams, SphereSpec};
use crate::report::{Environment, Repetition, Report};
use crate::{run_reps, tag, write_file};

fn validate(p: &ManifoldParams) -> anyhow::Result<()> {
    if p.n < 2 || p.gammas.is_empty() || p.max_steps == 0 || p.record_every == 0 {
        anyhow::bail!("need n >= 2, at least one gamma, max_steps >= 1, record_every >= 1");
    }
    if !(p.dt > 0.0 && p.g > 0.0 && p.target_gap > 0.0) {
        anyhow::bail!("dt, g and target_gap must be positive");
    }
    for &g in &p.gammas {
        DampingSchedule::constant(g)?;
    }
    if let Some(s) = &p.sphere {
        if s.c.len() != s.initial_q.len() || s.c.len() != s.initial_p.len() {
            anyhow::bail!("sphere: c, initial_q and initial_p must have equal length");
        }
    }
    Ok(())
}

fn so_n(p: &ManifoldParams, rep: usize, seed: u64, out: &Path, r: &mut Repetition) -> anyhow::Result<()> {
    let n = p.n;
    let mut rng = RngStream::new(seed).split(rep as u64);
    let scale = 1.0 / (n as f64).sqrt();
    let c = DMatrix::from_fn(n, n, |_, _| rng.normal() * scale);
    let prob = TraceLinear::new(c);
    let mut counts = Vec::with_capacity(p.gammas.len());
    let mut defect: f64 = 0.0;
    for &gamma in &p.gammas {
        let cfg = LieRunConfig {
            params: LieParams {
                dt: p.dt,
                g_scalar: p.g,
                schedule: DampingSchedule::constant(gamma)?,
                mode: ForceMode::SkewProjection,
            },
            num_steps: p.max_steps,
            record_every: p.record_every,
            target_gap: Some(p.target_gap),
            initial: MatrixGroupState::identity(n),
        };
        let traj = run_lie(&cfg, &prob)?;
        let name = format!("so{n}_gamma{}_rep{rep}.csv", tag(gamma));
        r.files.push(write_file(out, &name, |w| Ok(traj.write_csv(w)?))?);
        if let Some((_, col)) = &traj.extra {
            defect = col.iter().copied().fold(defect, f64::max);
        }
        // A run that misses the target counts as one step past the cap.
        let steps = match traj.termination {
            Termination::TargetReached { step } => step,
            _ => p.max_steps + 1,
        };
        r.set(format!("steps_gamma{}", tag(gamma)), steps as f64);
        counts.push(steps);
    }
    r.set("max_orthogonality_defect", defect);
    if counts.len() > 1 {
        let first_wins = counts[1..].iter().all(|&s| counts[0] < s);
        r.set("first_gamma_fastest", if first_wins { 1.0 } else { 0.0 });
    }
    Ok(())
}

fn sphere(s: &SphereSpec, rep: usize, out: &Path, r: &mut Repetition) -> anyhow::Result<()> {
    let d = s.c.len();
    let c = DVector::from_column_slice(&s.c);
    let target = -&c / c.norm();
    let cfg = RattleRunConfig {
        dt: s.dt,
        num_steps: s.num_steps,
        schedule: DampingSchedule::constant(s.gamma)?,
        metric: KineticMetric::identity(d),
        initial: PhasePoint::from_slices(&s.initial_q, &s.initial_p)?,
        record_every: 100,
        target_gap: None,
    };
    let f_star = -c.norm();
    let run = run_rattle(&cfg, &Linear::new(c), &ConstraintSet::new(Sphere::unit(d)), Some(f_star))?;
    let name = format!("sphere_rep{rep}.csv");
    r.files.push(write_file(out, &name, |w| Ok(run.trajectory.write_csv(w)?))?);
    r.set("sphere.max_residual", run.worst_residual);
    r.set("sphere.distance", (run.last.q() - &target).amax());
    Ok(())
}

pub fn run(cfg: &ExperimentConfig<ManifoldParams>) -> anyhow::Result<Report> {
    validate(&cfg.params)?;
    std::fs::create_dir_all(&cfg.out)?;
    let p = &cfg.params;
    let reps = run_reps(cfg.exec, cfg.reps, |rep| {
        let mut r = Repetition::new(rep);
        let res = so_n(p, rep, cfg.seed, &cfg.out, &mut r)
            .and_then(|_| p.sphere.as_ref().map_or(Ok(()), |s| sphere(s, rep, &cfg.out, &mut r)));
        if let Err(e) = res {
            r.error = Some(e.to_string());
        }
        r
    });
    let substitutions = vec![format!(
        "Tr(CQ) on SO({}) with C_ij ~ N(0, 1/{}) stands in for the large-scale matrix objective",
        p.n, p.n
    )];
    Ok(Report::new(
        &cfg.experiment,
        "manifold",
        Environment::capture(cfg.seed, cfg.reps),
        substitutions,
        cfg.checks.clone(),
        reps,
        BTreeMap::new(),
    ))
}
