//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use catlearn::datagen::ObservationSet;
use catlearn::model::{sample_dirichlet, Hyperparams, LatentState};
use catlearn::sampler::{ess_bulk_chains, GradientDensity, LogDensity, PosteriorDraws};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian log-density via an explicit inverse and determinant.
pub fn dense_mvn(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let r = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let quad = (r.transpose() * inv * &r)[(0, 0)];
    -0.5 * (d as f64 * LN_2PI + cov.determinant().ln() + quad)
}

fn dirichlet(x: &[f64], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    ln_gamma(a0) - alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>()
        + x.iter().zip(alpha).map(|(xi, a)| (a - 1.0) * xi.ln()).sum::<f64>()
}

fn truncated_normal(x: f64, w: f64, s: f64) -> f64 {
    // mass of Normal(w, s) above zero is Phi(w / s) = erfc(-w / (s sqrt 2)) / 2
    let mass = 0.5 * erfc(-w / (s * std::f64::consts::SQRT_2));
    -0.5 * LN_2PI - s.ln() - 0.5 * ((x - w) / s).powi(2) - mass.ln()
}

fn half_normal_unit(x: f64) -> f64 {
    2f64.ln() - 0.5 * LN_2PI - 0.5 * x * x
}

/// Sum of every component density of the joint, each computed from its
/// textbook formula.
pub fn oracle_log_joint(state: &LatentState, data: &ObservationSet, hyper: &Hyperparams) -> f64 {
    let (f, c) = (hyper.n_features, hyper.n_categories);
    let mut total = dirichlet(&state.p, &hyper.alpha_d) + dirichlet(&state.k, &hyper.alpha_l);
    if hyper.s > 0.0 {
        total += truncated_normal(state.omega, hyper.w, hyper.s);
    }
    total += state.sigma.iter().map(|s| half_normal_unit(*s)).sum::<f64>();
    let lo = -1.0 / (c as f64 - 1.0) + 1e-6;
    for i in 0..f {
        let b = (state.omega * state.p[i] + (1.0 - state.omega) * state.k[i]).clamp(0.0, 1.0);
        let r = (2.0 * (b.powf(1.0 / hyper.gamma) - 0.5)).clamp(lo, 1.0 - 1e-6);
        let cov = DMatrix::from_fn(c, c, |m, n| {
            let rho = if m == n { 1.0 } else { r };
            state.sigma[(i, m)] * state.sigma[(i, n)] * rho
        });
        let mu: Vec<f64> = (0..c).map(|m| state.mu[(i, m)]).collect();
        total += dense_mvn(&mu, &vec![0.0; c], &cov);
        let lik_cov = DMatrix::from_fn(c, c, |m, n| {
            if m == n {
                state.sigma[(i, m)].powi(2) + hyper.sigma_s2
            } else {
                0.0
            }
        });
        for row in data.rows(i) {
            total += dense_mvn(row, &mu, &lik_cov);
        }
    }
    total
}

/// A random interior state for `hyper`.
pub fn random_state<R: Rng>(hyper: &Hyperparams, rng: &mut R) -> LatentState {
    let (f, c) = (hyper.n_features, hyper.n_categories);
    let normal = Normal::new(0.0, 1.5).unwrap();
    LatentState {
        p: sample_dirichlet(&vec![2.0; f], rng).unwrap(),
        k: sample_dirichlet(&vec![2.0; f], rng).unwrap(),
        omega: if hyper.s > 0.0 { rng.random_range(0.05..1.0) } else { hyper.w },
        sigma: DMatrix::from_fn(f, c, |_, _| rng.random_range(0.1..2.5)),
        mu: DMatrix::from_fn(f, c, |_, _| normal.sample(rng)),
    }
}

/// Zero-mean Gaussian with the given covariance.
pub struct Gaussian {
    precision: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(cov: DMatrix<f64>) -> Self {
        Self {
            precision: cov.try_inverse().unwrap(),
        }
    }
}

impl LogDensity for Gaussian {
    fn log_density(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        -0.5 * (v.transpose() * &self.precision * &v)[(0, 0)]
    }
}

impl GradientDensity for Gaussian {
    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        let g = -(&self.precision * &v);
        grad.copy_from_slice(g.as_slice());
        0.5 * v.dot(&g)
    }
}

/// `Gamma(shape, rate)` sampled as `z = ln x`; the density of `z` carries
/// the Jacobian `e^z`.
pub struct LogGamma {
    pub shape: f64,
    pub rate: f64,
}

impl LogDensity for LogGamma {
    fn log_density(&self, z: &[f64]) -> f64 {
        self.shape * z[0] - self.rate * z[0].exp()
    }
}

impl GradientDensity for LogGamma {
    fn log_density_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] = self.shape - self.rate * z[0].exp();
        self.log_density(z)
    }
}

/// Estimate of a mean or standard deviation with its Monte-Carlo error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub value: f64,
    pub mcse: f64,
}

impl McEstimate {
    pub fn within(&self, truth: f64, n_se: f64) -> bool {
        (self.value - truth).abs() <= n_se * self.mcse
    }
}

/// Mean and standard deviation of `f(draw)` over all chains, with MCSEs from
/// the bulk effective sample size (delta method for the sd).
pub fn mc_moments(draws: &PosteriorDraws, f: impl Fn(&[f64]) -> f64) -> (McEstimate, McEstimate) {
    let chains: Vec<Vec<f64>> = (0..draws.n_chains())
        .map(|c| draws.chains[c].draws.chunks_exact(draws.dim).map(&f).collect())
        .collect();
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
    let ess_mean = ess_bulk_chains(&refs);

    let sq: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| (x - mean).powi(2)).collect()).collect();
    let sq_refs: Vec<&[f64]> = sq.iter().map(|c| c.as_slice()).collect();
    let ess_sq = ess_bulk_chains(&sq_refs);
    let sq_all: Vec<f64> = sq.iter().flatten().copied().collect();
    let var_sq = sq_all.iter().map(|x| (x - var).powi(2)).sum::<f64>() / (n - 1.0);
    let mcse_var = (var_sq / ess_sq).sqrt();
    (
        McEstimate { value: mean, mcse: sd / ess_mean.sqrt() },
        McEstimate { value: sd, mcse: mcse_var / (2.0 * sd) },
    )
}
