mod common;

use catlearn::sampler::{
    run_chains, run_random_walk, split_rhat, LogDensity, ProposalScale, RandomWalkKernel, SamplerConfig, SamplerError,
};
use common::{mc_moments, Gaussian, LogGamma};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::erf::erfc;

fn config(seed: u64) -> SamplerConfig {
    SamplerConfig { seed, ..SamplerConfig::default() }
}

#[test]
fn isotropic_gaussian_moments() {
    let draws = run_chains(&Gaussian::new(DMatrix::identity(5, 5)), 5, &config(1)).unwrap();
    for d in 0..5 {
        let (m, s) = mc_moments(&draws, |x| x[d]);
        assert!(m.value.abs() < 0.05 && m.within(0.0, 3.0), "mean {d}: {m:?}");
        assert!((s.value - 1.0).abs() < 0.1 && s.within(1.0, 3.0), "sd {d}: {s:?}");
    }
    assert!(split_rhat(&draws).unwrap().iter().all(|r| *r < 1.01));
}

#[test]
fn correlated_gaussian_moments() {
    let rho = 0.8;
    let target = Gaussian::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]));
    let draws = run_chains(&target, 2, &config(2)).unwrap();
    let pooled: Vec<&[f64]> = draws.pooled().collect();
    let n = pooled.len() as f64;
    let mean = |d: usize| pooled.iter().map(|x| x[d]).sum::<f64>() / n;
    let (m0, m1) = (mean(0), mean(1));
    let cov = pooled.iter().map(|x| (x[0] - m0) * (x[1] - m1)).sum::<f64>() / n;
    let var = |d: usize, m: f64| pooled.iter().map(|x| (x[d] - m).powi(2)).sum::<f64>() / n;
    let corr = cov / (var(0, m0) * var(1, m1)).sqrt();
    assert!((corr - rho).abs() < 0.05, "sample correlation {corr}");
    let (cross, _) = mc_moments(&draws, |x| x[0] * x[1]);
    assert!(cross.within(rho, 3.0), "{cross:?}");
}

#[test]
fn log_transformed_gamma_moments() {
    let (shape, rate) = (3.0, 2.0);
    let draws = run_chains(&LogGamma { shape, rate }, 1, &config(3)).unwrap();
    let (m, s) = mc_moments(&draws, |z| z[0].exp());
    assert!(m.within(shape / rate, 3.0), "{m:?}");
    assert!(s.within(shape.sqrt() / rate, 3.0), "{s:?}");
}

#[test]
fn random_walk_calibration() {
    let cfg = SamplerConfig { seed: 4, n_samples: 4000, ..SamplerConfig::random_walk() };
    let draws = run_random_walk(&Gaussian::new(DMatrix::identity(3, 3)), 3, &cfg).unwrap();
    for d in 0..3 {
        let (m, s) = mc_moments(&draws, |x| x[d]);
        assert!(m.within(0.0, 3.0), "{m:?}");
        assert!(s.within(1.0, 3.0), "{s:?}");
    }
    let rate = draws.mean_accept_rate();
    assert!((0.15..0.4).contains(&rate), "acceptance {rate}");
}

#[test]
fn retained_draws_have_finite_density_and_are_reproducible() {
    let target = LogGamma { shape: 2.0, rate: 1.0 };
    let a = run_chains(&target, 1, &config(9)).unwrap();
    assert!(a.chains.iter().all(|c| c.log_density.iter().all(|v| v.is_finite())));
    assert!(a.pooled().all(|x| target.log_density(x).is_finite()));
    assert_eq!(a, run_chains(&target, 1, &config(9)).unwrap());
    assert_ne!(a, run_chains(&target, 1, &config(10)).unwrap());
}

struct Point;

impl LogDensity for Point {
    fn log_density(&self, x: &[f64]) -> f64 {
        if x.iter().all(|v| *v == 0.25) { 0.0 } else { f64::NEG_INFINITY }
    }
}

#[test]
fn unsatisfiable_support_fails_initialization() {
    let err = run_random_walk(&Point, 2, &SamplerConfig::random_walk()).unwrap_err();
    assert!(matches!(err, SamplerError::Initialization { .. }), "{err}");
}

#[test]
fn random_walk_kernel_is_reversible() {
    // Starting from exact draws of a skewed target, one fixed-step transition
    // gives an exchangeable pair, so upward and downward moves are equally likely.
    let (shape, rate) = (2.0, 1.5);
    let target = LogGamma { shape, rate };
    let kernel = RandomWalkKernel { step: 1.2, scale: ProposalScale::identity(1) };
    let exact = Gamma::new(shape, 1.0 / rate).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut up, mut down) = (0u64, 0u64);
    for _ in 0..100_000 {
        let z0 = exact.sample(&mut rng).ln();
        let mut z = vec![z0];
        let mut lp = target.log_density(&z);
        kernel.transition(&target, &mut z, &mut lp, &mut rng);
        if z[0] > z0 {
            up += 1;
        } else if z[0] < z0 {
            down += 1;
        }
    }
    let n = (up + down) as f64;
    let score = (up as f64 - n / 2.0) / (n / 4.0).sqrt();
    let p = erfc(score.abs() / std::f64::consts::SQRT_2);
    assert!(p > 0.01, "up {up}, down {down}, p {p}");
    assert!(n > 30_000.0);
}
