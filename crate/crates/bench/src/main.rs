use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geomint_bench::config::ExperimentConfig;
use geomint_bench::{discrepancy, manifold, optimize, sample, Report, REPORT_FILE};
use serde::de::DeserializeOwned;

/// Desk-scale experiments for the geometric integrators, samplers and discrepancies.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence rates of dissipative integrators.
    Optimize(Common),
    /// SO(n) damping comparison and sphere-constrained RATTLE.
    Manifold(Common),
    /// HMC and Langevin samplers, KSD curve and Euler–Maruyama bias.
    Sample(Common),
    /// MMD, KSD and score-matching estimators on a sample file.
    Discrepancy(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (strict JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config repetition count.
    #[arg(long)]
    reps: Option<usize>,
}

impl Common {
    fn load<P: DeserializeOwned>(&self) -> anyhow::Result<ExperimentConfig<P>> {
        ExperimentConfig::load(&self.config)?.with_overrides(self.seed, self.reps, self.out.clone())
    }

    fn config_dir(&self) -> &Path {
        self.config.parent().unwrap_or(Path::new("."))
    }
}

fn execute(cli: &Cli) -> anyhow::Result<Report> {
    let (report, out) = match &cli.command {
        Command::Optimize(c) => {
            let cfg = c.load()?;
            (optimize::run(&cfg)?, cfg.out)
        }
        Command::Manifold(c) => {
            let cfg = c.load()?;
            (manifold::run(&cfg)?, cfg.out)
        }
        Command::Sample(c) => {
            let cfg = c.load()?;
            (sample::run(&cfg)?, cfg.out)
        }
        Command::Discrepancy(c) => {
            let cfg = c.load()?;
            (discrepancy::run(&cfg, c.config_dir())?, cfg.out)
        }
    };
    report.write(&out.join(REPORT_FILE))?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            for v in &report.verdicts {
                let obs: Vec<String> =
                    v.observed.iter().map(|o| o.map_or("missing".to_string(), |x| format!("{x:.6e}"))).collect();
                println!("{} {} (observed {})", if v.pass { "PASS" } else { "FAIL" }, v.check, obs.join(", "));
            }
            for e in &report.errors {
                eprintln!("error: {e}");
            }
            if !report.errors.is_empty() {
                ExitCode::from(1)
            } else if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
