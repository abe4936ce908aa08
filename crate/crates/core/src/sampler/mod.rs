//! MCMC over an unconstrained vector: the No-U-Turn sampler for targets with
//! gradients, and adaptive random-walk Metropolis for those without.
//!
//! Each chain starts from a diffuse uniform draw, then adapts during warmup:
//! dual averaging tunes the step size toward `target_accept`, and windowed
//! estimates of the draw covariance set the metric (NUTS) or proposal shape
//! (random walk). Warmup draws are discarded.

mod adapt;
mod diagnostics;
mod nuts;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

pub use adapt::{DualAverage, WarmupSchedule, Welford};
pub use diagnostics::{
    diagnose, ess, ess_bulk_chains, posterior_summary, split_rhat, split_rhat_chains, Diagnostics,
    PosteriorSummary,
};
pub use nuts::{InverseMetric, NutsKernel, NutsTransition, PhasePoint};

/// A log-density over `R^d`. Non-finite values mark points outside the support.
pub trait LogDensity: Sync {
    fn log_density(&self, x: &[f64]) -> f64;
}

impl<F> LogDensity for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn log_density(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// A log-density that also reports its gradient.
pub trait GradientDensity: LogDensity {
    /// Returns the log-density at `x` and writes its gradient into `grad`.
    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("chain {chain}: no finite log-density among {attempts} initial points")]
    Initialization { chain: usize, attempts: usize },
    #[error("chain {chain}: every proposal was rejected during warmup")]
    AdaptationFailure { chain: usize },
    #[error("diagnostics need at least 2 chains of 4 draws (got {chains} x {draws})")]
    InsufficientDraws { chains: usize, draws: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Nuts,
    RandomWalk,
}

/// Shape of the covariance estimate learned during warmup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Independent per-coordinate scales.
    #[default]
    Diagonal,
    /// Full covariance, for targets with strongly correlated coordinates.
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub target_accept: f64,
    pub seed: u64,
    /// Cap on rounds of step doubling/halving while searching for a workable
    /// initial step.
    pub max_step_halvings: usize,
    pub max_tree_depth: usize,
    pub metric: Metric,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Nuts,
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1000,
            target_accept: 0.8,
            seed: 0,
            max_step_halvings: 30,
            max_tree_depth: 10,
            metric: Metric::Diagonal,
        }
    }
}

impl SamplerConfig {
    /// Random-walk Metropolis tuned toward its usual optimal acceptance.
    pub fn random_walk() -> Self {
        Self {
            algorithm: Algorithm::RandomWalk,
            target_accept: 0.25,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_chains == 0 || self.n_samples == 0 {
            return Err(SamplerError::InvalidConfig(
                "n_chains and n_samples must be positive".into(),
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(SamplerError::InvalidConfig(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        Ok(())
    }
}

/// Proposal shape: `x' = x + step * L * xi` with `xi ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalScale {
    Diagonal(Vec<f64>),
    /// Lower Cholesky factor of the proposal covariance.
    Dense(DMatrix<f64>),
}

impl ProposalScale {
    pub fn identity(dim: usize) -> Self {
        ProposalScale::Diagonal(vec![1.0; dim])
    }

    fn from_covariance(cov: &DMatrix<f64>, metric: Metric) -> Option<Self> {
        match metric {
            Metric::Diagonal => Some(ProposalScale::Diagonal(
                (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect(),
            )),
            Metric::Dense => cov
                .clone()
                .cholesky()
                .map(|c| ProposalScale::Dense(c.l())),
        }
    }

    fn apply(&self, noise: &[f64], out: &mut [f64]) {
        match self {
            ProposalScale::Diagonal(sd) => {
                out.iter_mut().zip(noise.iter().zip(sd)).for_each(|(o, (n, s))| *o = n * s);
            }
            ProposalScale::Dense(l) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..=i).map(|j| l[(i, j)] * noise[j]).sum();
                }
            }
        }
    }
}

/// Outcome of one Metropolis transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub accepted: bool,
    /// `min(1, exp(Δ log-density))`, zero for non-finite proposals.
    pub accept_prob: f64,
    pub proposal_finite: bool,
}

/// Symmetric Gaussian random-walk kernel at a fixed step and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkKernel {
    pub step: f64,
    pub scale: ProposalScale,
}

impl RandomWalkKernel {
    /// Draws the proposal displacement for the current step and shape.
    pub fn displacement<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        let noise: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut out = vec![0.0; dim];
        self.scale.apply(&noise, &mut out);
        out.iter_mut().for_each(|v| *v *= self.step);
        out
    }

    /// Proposes from `x`, updating `x` and `log_density` in place on acceptance.
    pub fn transition<T: LogDensity + ?Sized, R: Rng + ?Sized>(
        &self,
        target: &T,
        x: &mut Vec<f64>,
        log_density: &mut f64,
        rng: &mut R,
    ) -> Transition {
        let delta = self.displacement(x.len(), rng);
        let proposal: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let lp = target.log_density(&proposal);
        let u: f64 = rng.random();
        let finite = lp.is_finite();
        let accept_prob = if finite {
            (lp - *log_density).exp().min(1.0)
        } else {
            0.0
        };
        let accepted = finite && u.ln() < lp - *log_density;
        if accepted {
            *x = proposal;
            *log_density = lp;
        }
        Transition {
            accepted,
            accept_prob,
            proposal_finite: finite,
        }
    }
}

/// Retained post-warmup draws of a single chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    /// Row-major `n_samples x dim`.
    pub draws: Vec<f64>,
    pub log_density: Vec<f64>,
    pub warmup_accept_rate: f64,
    pub accept_rate: f64,
    pub step_size: f64,
    /// Random-walk proposals over the whole run whose log-density was not finite.
    pub n_nonfinite: usize,
    /// Post-warmup NUTS transitions that hit a divergence.
    pub n_divergent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub dim: usize,
    pub n_samples: usize,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_samples
    }

    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        &self.chains[chain].draws[i * self.dim..(i + 1) * self.dim]
    }

    /// Draws of every chain, chain-major.
    pub fn pooled(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flat_map(move |c| c.draws.chunks_exact(self.dim))
    }

    /// Per-chain traces of coordinate `d`.
    pub fn coordinate(&self, d: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.draws.chunks_exact(self.dim).map(|row| row[d]).collect())
            .collect()
    }

    pub fn mean_accept_rate(&self) -> f64 {
        self.chains.iter().map(|c| c.accept_rate).sum::<f64>() / self.n_chains() as f64
    }

    pub fn n_nonfinite(&self) -> usize {
        self.chains.iter().map(|c| c.n_nonfinite).sum()
    }

    pub fn n_divergent(&self) -> usize {
        self.chains.iter().map(|c| c.n_divergent).sum()
    }

    /// Writes `chain,draw,dim0,...` rows for every retained draw.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SamplerError> {
        let header: Vec<String> = (0..self.dim).map(|d| format!("dim{d}")).collect();
        writeln!(out, "chain,draw,{}", header.join(","))?;
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, row) in chain.draws.chunks_exact(self.dim).enumerate() {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{c},{i},{}", vals.join(","))?;
            }
        }
        Ok(())
    }
}

const INIT_ATTEMPTS: usize = 100;

/// Random-walk optimal scale for a unit-covariance target.
fn reference_step(dim: usize) -> f64 {
    2.38 / (dim as f64).sqrt()
}

/// Runs `config.n_chains` independent chains in parallel with the configured
/// algorithm. Chain `c` draws from stream `c` of a ChaCha generator keyed by
/// `config.seed`, so output is identical regardless of thread count.
pub fn run_chains<T: GradientDensity + ?Sized>(
    target: &T,
    dim: usize,
    config: &SamplerConfig,
) -> Result<PosteriorDraws, SamplerError> {
    match config.algorithm {
        Algorithm::Nuts => run_parallel(dim, config, |c| nuts::run_chain(target, dim, config, c)),
        Algorithm::RandomWalk => run_random_walk(target, dim, config),
    }
}

/// Random-walk Metropolis for targets without gradients, regardless of
/// `config.algorithm`.
pub fn run_random_walk<T: LogDensity + ?Sized>(
    target: &T,
    dim: usize,
    config: &SamplerConfig,
) -> Result<PosteriorDraws, SamplerError> {
    run_parallel(dim, config, |c| run_chain(target, dim, config, c))
}

fn run_parallel<F>(dim: usize, config: &SamplerConfig, chain: F) -> Result<PosteriorDraws, SamplerError>
where
    F: Fn(usize) -> Result<ChainDraws, SamplerError> + Sync + Send,
{
    config.validate()?;
    if dim == 0 {
        return Err(SamplerError::InvalidConfig("dimension must be positive".into()));
    }
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(chain)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PosteriorDraws {
        dim,
        n_samples: config.n_samples,
        chains,
    })
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    dim: usize,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainDraws, SamplerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);

    let (mut x, mut lp) = initial_point(target, dim, &mut rng)
        .ok_or(SamplerError::Initialization { chain, attempts: INIT_ATTEMPTS })?;

    let mut kernel = RandomWalkKernel {
        step: reference_step(dim),
        scale: ProposalScale::identity(dim),
    };
    kernel.step = initial_step(target, &kernel, &x, lp, config.max_step_halvings, &mut rng);

    let mut n_nonfinite = 0usize;
    let schedule = WarmupSchedule::new(config.n_warmup);
    let mut welford = Welford::new(dim);
    let mut dual = DualAverage::new(config.target_accept, kernel.step);
    let mut warmup_accepted = 0usize;
    for iter in 0..config.n_warmup {
        let t = kernel.transition(target, &mut x, &mut lp, &mut rng);
        warmup_accepted += usize::from(t.accepted);
        n_nonfinite += usize::from(!t.proposal_finite);
        dual.advance(t.accept_prob);
        kernel.step = dual.current();
        if schedule.in_window(iter) {
            welford.add(&x);
        }
        if schedule.is_window_end(iter) {
            if let Some(scale) = ProposalScale::from_covariance(&welford.regularized_covariance(), config.metric) {
                kernel.scale = scale;
                kernel.step = reference_step(dim);
                dual = DualAverage::new(config.target_accept, kernel.step);
            }
            welford.reset();
        }
    }
    if config.n_warmup > 0 {
        if warmup_accepted == 0 {
            return Err(SamplerError::AdaptationFailure { chain });
        }
        kernel.step = dual.adapted();
    }

    let mut draws = Vec::with_capacity(config.n_samples * dim);
    let mut log_density = Vec::with_capacity(config.n_samples);
    let mut accepted = 0usize;
    for _ in 0..config.n_samples {
        let t = kernel.transition(target, &mut x, &mut lp, &mut rng);
        accepted += usize::from(t.accepted);
        n_nonfinite += usize::from(!t.proposal_finite);
        draws.extend_from_slice(&x);
        log_density.push(lp);
    }
    Ok(ChainDraws {
        draws,
        log_density,
        warmup_accept_rate: if config.n_warmup > 0 {
            warmup_accepted as f64 / config.n_warmup as f64
        } else {
            f64::NAN
        },
        accept_rate: accepted as f64 / config.n_samples as f64,
        step_size: kernel.step,
        n_nonfinite,
        n_divergent: 0,
    })
}

fn initial_point<T: LogDensity + ?Sized, R: Rng + ?Sized>(target: &T, dim: usize, rng: &mut R) -> Option<(Vec<f64>, f64)> {
    for _ in 0..INIT_ATTEMPTS {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let lp = target.log_density(&x);
        if lp.is_finite() {
            return Some((x, lp));
        }
    }
    None
}

/// Halves the step until a batch of trial proposals is accepted at a
/// non-negligible rate.
fn initial_step<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    kernel: &RandomWalkKernel,
    x: &[f64],
    lp: f64,
    max_halvings: usize,
    rng: &mut R,
) -> f64 {
    const TRIALS: usize = 10;
    let mut trial = kernel.clone();
    for _ in 0..max_halvings {
        let mean_prob: f64 = (0..TRIALS)
            .map(|_| {
                let delta = trial.displacement(x.len(), rng);
                let y: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
                let lq = target.log_density(&y);
                if lq.is_finite() {
                    (lq - lp).exp().min(1.0)
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / TRIALS as f64;
        if mean_prob >= 0.05 {
            break;
        }
        trial.step *= 0.5;
    }
    trial.step
}

/// Sample covariance of the pooled draws.
pub fn sample_covariance(draws: &PosteriorDraws) -> DMatrix<f64> {
    let n = draws.total_draws() as f64;
    let mean = draws
        .pooled()
        .fold(DVector::zeros(draws.dim), |acc, x| acc + DVector::from_column_slice(x))
        / n;
    draws.pooled().fold(DMatrix::zeros(draws.dim, draws.dim), |acc, x| {
        let d = DVector::from_column_slice(x) - &mean;
        acc + &d * d.transpose()
    }) / (n - 1.0)
}
