use geomint::problems::{GaussianMixture1d, Quadratic};
use geomint::samplers::{
    complete_recipe_em_step, run_chains, underdamped_step, ChainsConfig, DiffusionSpec, HmcParams, RngStream, Sampler,
};
use geomint::{DMatrix, DVector, Execution, KineticMetric, PhasePoint};

fn hmc_config(dt: f64, steps: usize, draws: usize, keep_rows: bool) -> ChainsConfig {
    ChainsConfig {
        sampler: Sampler::Hmc(HmcParams::new(dt, steps)),
        metric: KineticMetric::identity(1),
        draws,
        burn_in: 0,
        keep_rows,
        keep_momenta: false,
        exec: Execution::Parallel,
    }
}

#[test]
fn hmc_leaves_the_target_invariant() {
    let n = 10_000;
    let mut rng = RngStream::new(11);
    let inits: Vec<_> = (0..n).map(|_| rng.normal_vec(1)).collect();
    let runs = run_chains(&Quadratic::isotropic(1, 1.0), &hmc_config(0.3, 5, 1000, false), &inits, 12).unwrap();
    let finals: Vec<f64> = runs.iter().map(|r| r.state.position()[0]).collect();
    let nf = n as f64;
    let mean = finals.iter().sum::<f64>() / nf;
    let m2 = finals.iter().map(|x| x * x).sum::<f64>() / nf;
    // Final states are independent draws if the target is preserved.
    assert!(mean.abs() < 4.0 / nf.sqrt(), "mean {mean}");
    assert!((m2 - 1.0).abs() < 4.0 * (2.0 / nf).sqrt(), "second moment {m2}");
}

const EDGES: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

fn bin(x: f64) -> usize {
    EDGES.iter().take_while(|&&e| x >= e).count()
}

/// `Σ_{i<j} (N_ij − N_ji)² / (N_ij + N_ji)` over binned pairs.
fn asymmetry(pairs: &[(f64, f64)]) -> (f64, usize) {
    let k = EDGES.len() + 1;
    let mut counts = vec![vec![0.0f64; k]; k];
    for &(a, b) in pairs {
        counts[bin(a)][bin(b)] += 1.0;
    }
    let mut stat = 0.0;
    let mut df = 0;
    for i in 0..k {
        for j in i + 1..k {
            let total = counts[i][j] + counts[j][i];
            if total > 0.0 {
                stat += (counts[i][j] - counts[j][i]).powi(2) / total;
                df += 1;
            }
        }
    }
    (stat, df)
}

#[test]
fn hmc_transitions_are_reversible_on_a_mixture() {
    let target = GaussianMixture1d::symmetric(2.0);
    let n = 100_000;
    let mut rng = RngStream::new(21);
    let inits: Vec<_> = (0..n)
        .map(|_| {
            let centre = if rng.uniform() < 0.5 { -2.0 } else { 2.0 };
            DVector::from_element(1, centre + rng.normal())
        })
        .collect();
    // One transition from an exact draw: the pair is exchangeable under detailed balance,
    // so each flux difference is binomial around zero given its total.
    let runs = run_chains(&target, &hmc_config(0.25, 8, 1, true), &inits, 22).unwrap();
    let pairs: Vec<(f64, f64)> = inits.iter().zip(&runs).map(|(x, r)| (x[0], r.rows[0].q[0])).collect();
    let (stat, df) = asymmetry(&pairs);
    assert_eq!(df, 15);
    // 99.9% quantile of χ² with 15 degrees of freedom.
    assert!(stat < 37.70, "asymmetry χ² {stat}");
    assert!(pairs.iter().filter(|(a, b)| a != b).count() > n / 2);

    let drifted: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (a, b + 0.2)).collect();
    assert!(asymmetry(&drifted).0 > 100.0, "the statistic should detect a non-reversible kernel");
}

#[test]
fn irreversible_recipe_keeps_the_gaussian() {
    let prob = Quadratic::isotropic(2, 1.0);
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let spec = DiffusionSpec::constant(DMatrix::identity(2, 2), a).unwrap();
    let dt = 1e-3;
    let mut rng = RngStream::new(31);
    let mut x = DVector::zeros(2);
    let steps = 1_000_000;
    let (mut s, mut s2, mut cross) = (DVector::zeros(2), DVector::zeros(2), 0.0);
    for _ in 0..steps {
        x = complete_recipe_em_step(&x, &prob, &spec, dt, &mut rng).unwrap();
        s += &x;
        s2 += x.component_mul(&x);
        cross += x[0] * x[1];
    }
    let n = steps as f64;
    let mean = &s / n;
    let var = &s2 / n - mean.component_mul(&mean);
    let cov = cross / n - mean[0] * mean[1];
    // Path length is 10³ time units, so Monte Carlo error is a few hundredths.
    assert!(mean.amax() < 0.15, "mean {mean}");
    assert!((var[0] - 1.0).abs() < 0.15 && (var[1] - 1.0).abs() < 0.15, "variance {var}");
    assert!(cov.abs() < 0.15, "covariance {cov}");
}

fn underdamped_position_variance(dt: f64, steps: usize, seed: u64) -> f64 {
    let prob = Quadratic::isotropic(1, 1.0);
    let g = KineticMetric::identity(1);
    let mut rng = RngStream::new(seed);
    let mut x = PhasePoint::from_slices(&[0.0], &[0.0]).unwrap();
    for _ in 0..2000 {
        x = underdamped_step(&x, &prob, &g, dt, 1.0, 1.0, &mut rng).unwrap();
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..steps {
        x = underdamped_step(&x, &prob, &g, dt, 1.0, 1.0, &mut rng).unwrap();
        s += x.q()[0];
        s2 += x.q()[0] * x.q()[0];
    }
    let n = steps as f64;
    s2 / n - (s / n).powi(2)
}

#[test]
fn underdamped_bias_shrinks_with_step() {
    // For this splitting on V = ½q² the stationary position variance is 1/(1 − δt²/4).
    let dts = [0.8, 0.4, 0.2];
    let vars: Vec<f64> = dts.iter().map(|&dt| underdamped_position_variance(dt, 1_000_000, 41)).collect();
    let analytic = 1.0 / (1.0 - 0.16);
    assert!((vars[0] - analytic).abs() / analytic < 0.03, "{} vs {analytic}", vars[0]);
    let bias: Vec<f64> = vars.iter().map(|v| (v - 1.0).abs()).collect();
    assert!(bias[0] > bias[1] && bias[1] > bias[2], "{bias:?}");
}

#[test]
fn chains_are_reproducible_and_schedule_independent() {
    let inits = vec![DVector::zeros(1); 8];
    let cfg = hmc_config(0.2, 7, 300, true);
    let a = run_chains(&Quadratic::isotropic(1, 1.0), &cfg, &inits, 5).unwrap();
    let seq = ChainsConfig { exec: Execution::Sequential, ..cfg };
    let b = run_chains(&Quadratic::isotropic(1, 1.0), &seq, &inits, 5).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.rows, y.rows);
    }
}
