//! No-U-Turn sampler with multinomial trajectory sampling and the
//! generalized (momentum-sharp) termination criterion.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    ChainDraws, DualAverage, GradientDensity, Metric, SamplerConfig, SamplerError, WarmupSchedule,
    Welford, INIT_ATTEMPTS,
};

/// Energy error beyond which a trajectory is declared divergent.
const MAX_DELTA_H: f64 = 1000.0;

/// Inverse mass matrix: the estimated posterior covariance (or its diagonal).
#[derive(Debug, Clone, PartialEq)]
pub enum InverseMetric {
    Diagonal(Vec<f64>),
    Dense {
        cov: DMatrix<f64>,
        /// Lower Cholesky factor of `cov`.
        chol: DMatrix<f64>,
    },
}

impl InverseMetric {
    pub fn identity(dim: usize) -> Self {
        InverseMetric::Diagonal(vec![1.0; dim])
    }

    fn from_covariance(cov: DMatrix<f64>, metric: Metric) -> Option<Self> {
        match metric {
            Metric::Diagonal => Some(InverseMetric::Diagonal(
                (0..cov.nrows()).map(|i| cov[(i, i)]).collect(),
            )),
            Metric::Dense => {
                let chol = cov.clone().cholesky()?.l();
                Some(InverseMetric::Dense { cov, chol })
            }
        }
    }

    /// Draws momentum from `N(0, M)`.
    fn sample_momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            InverseMetric::Diagonal(var) => var
                .iter()
                .map(|v| rng.sample::<f64, _>(StandardNormal) / v.sqrt())
                .collect(),
            InverseMetric::Dense { chol, .. } => {
                let xi = DVector::from_iterator(chol.nrows(), (0..chol.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
                chol.tr_solve_lower_triangular(&xi)
                    .expect("metric factor has a positive diagonal")
                    .iter()
                    .copied()
                    .collect()
            }
        }
    }

    /// `M^-1 p`, the position velocity.
    fn velocity(&self, p: &[f64]) -> Vec<f64> {
        match self {
            InverseMetric::Diagonal(var) => p.iter().zip(var).map(|(a, v)| a * v).collect(),
            InverseMetric::Dense { cov, .. } => (cov * DVector::from_column_slice(p)).iter().copied().collect(),
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * dot(p, &self.velocity(p))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// A point in phase space with its cached log-density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_density: f64,
}

impl PhasePoint {
    pub fn new<T: GradientDensity + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let log_density = target.log_density_gradient(&q, &mut grad);
        let dim = q.len();
        Self {
            q,
            p: vec![0.0; dim],
            grad,
            log_density,
        }
    }

    fn is_valid(&self) -> bool {
        self.log_density.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

/// Diagnostics of one NUTS transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsTransition {
    /// Mean Metropolis acceptance over every leapfrog state visited.
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub depth: usize,
    pub divergent: bool,
}

#[derive(Default)]
struct TreeStats {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// NUTS kernel at a fixed step size and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct NutsKernel {
    pub step: f64,
    pub metric: InverseMetric,
    pub max_depth: usize,
}

impl NutsKernel {
    fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        -z.log_density + self.metric.kinetic(&z.p)
    }

    fn leapfrog<T: GradientDensity + ?Sized>(&self, target: &T, z: &mut PhasePoint, eps: f64) {
        z.p.iter_mut().zip(&z.grad).for_each(|(p, g)| *p += 0.5 * eps * g);
        let v = self.metric.velocity(&z.p);
        z.q.iter_mut().zip(&v).for_each(|(q, v)| *q += eps * v);
        z.log_density = target.log_density_gradient(&z.q, &mut z.grad);
        if z.is_valid() {
            z.p.iter_mut().zip(&z.grad).for_each(|(p, g)| *p += 0.5 * eps * g);
        }
    }

    fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
        dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree<T: GradientDensity + ?Sized, R: Rng + ?Sized>(
        &self,
        target: &T,
        depth: usize,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
        stats: &mut TreeStats,
        rng: &mut R,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(target, z, sign * self.step);
            stats.n_leapfrog += 1;
            let mut h = self.hamiltonian(z);
            if !z.is_valid() || h.is_nan() {
                h = f64::INFINITY;
            }
            if h - h0 > MAX_DELTA_H {
                stats.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, h0 - h);
            stats.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.metric.velocity(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            add_into(rho, &z.p);
            p_beg.clone_from(&z.p);
            p_end.clone_from(&z.p);
            return !stats.divergent;
        }

        let dim = z.q.len();
        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        if !self.build_tree(
            target, depth - 1, z, z_propose, p_sharp_beg, &mut p_sharp_init_end, &mut rho_init, p_beg,
            &mut p_init_end, h0, sign, &mut lsw_init, stats, rng,
        ) {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        if !self.build_tree(
            target, depth - 1, z, &mut z_propose_final, &mut p_sharp_final_beg, p_sharp_end, &mut rho_final,
            &mut p_final_beg, p_end, h0, sign, &mut lsw_final, stats, rng,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            *z_propose = z_propose_final;
        }

        let mut rho_subtree = rho_init.clone();
        add_into(&mut rho_subtree, &rho_final);
        add_into(rho, &rho_subtree);

        let mut persist = Self::criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let mut rho_extended = rho_init;
        add_into(&mut rho_extended, &p_final_beg);
        persist &= Self::criterion(p_sharp_beg, &p_sharp_final_beg, &rho_extended);
        let mut rho_extended = rho_final;
        add_into(&mut rho_extended, &p_init_end);
        persist &= Self::criterion(&p_sharp_init_end, p_sharp_end, &rho_extended);
        persist
    }

    /// One NUTS transition from `current` (whose momentum is ignored).
    pub fn transition<T: GradientDensity + ?Sized, R: Rng + ?Sized>(
        &self,
        target: &T,
        current: &PhasePoint,
        rng: &mut R,
    ) -> (PhasePoint, NutsTransition) {
        let dim = current.q.len();
        let mut z = current.clone();
        z.p = self.metric.sample_momentum(rng);
        let h0 = self.hamiltonian(&z);

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let p_sharp = self.metric.velocity(&z.p);
        let (mut p_fwd_fwd, mut p_fwd_bck) = (z.p.clone(), z.p.clone());
        let (mut p_bck_fwd, mut p_bck_bck) = (z.p.clone(), z.p.clone());
        let (mut p_sharp_fwd_fwd, mut p_sharp_fwd_bck) = (p_sharp.clone(), p_sharp.clone());
        let (mut p_sharp_bck_fwd, mut p_sharp_bck_bck) = (p_sharp.clone(), p_sharp);
        let mut rho = z.p.clone();

        let mut log_sum_weight = 0.0;
        let mut stats = TreeStats::default();
        let mut depth = 0;
        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if rng.random::<f64>() > 0.5 {
                z.clone_from(&z_fwd);
                rho_bck.clone_from(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
                let ok = self.build_tree(
                    target, depth, &mut z, &mut z_propose, &mut p_sharp_fwd_bck, &mut p_sharp_fwd_fwd,
                    &mut rho_fwd, &mut p_fwd_bck, &mut p_fwd_fwd, h0, 1.0, &mut lsw_subtree, &mut stats, rng,
                );
                z_fwd.clone_from(&z);
                ok
            } else {
                z.clone_from(&z_bck);
                rho_fwd.clone_from(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
                let ok = self.build_tree(
                    target, depth, &mut z, &mut z_propose, &mut p_sharp_bck_fwd, &mut p_sharp_bck_bck,
                    &mut rho_bck, &mut p_bck_fwd, &mut p_bck_bck, h0, -1.0, &mut lsw_subtree, &mut stats, rng,
                );
                z_bck.clone_from(&z);
                ok
            };
            if !valid {
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight || rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample.clone_from(&z_propose);
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            rho = rho_bck.clone();
            add_into(&mut rho, &rho_fwd);
            let mut persist = Self::criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let mut rho_extended = rho_bck;
            add_into(&mut rho_extended, &p_fwd_bck);
            persist &= Self::criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_extended);
            let mut rho_extended = rho_fwd;
            add_into(&mut rho_extended, &p_bck_fwd);
            persist &= Self::criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_extended);
            if !persist {
                break;
            }
        }

        let info = NutsTransition {
            accept_stat: if stats.n_leapfrog > 0 {
                stats.sum_metro_prob / stats.n_leapfrog as f64
            } else {
                0.0
            },
            n_leapfrog: stats.n_leapfrog,
            depth,
            divergent: stats.divergent,
        };
        (z_sample, info)
    }

    /// Doubles or halves the step until a single leapfrog step crosses an
    /// acceptance of 0.8, bounded by `max_rounds`.
    fn heuristic_step<T: GradientDensity + ?Sized, R: Rng + ?Sized>(
        &mut self,
        target: &T,
        start: &PhasePoint,
        max_rounds: usize,
        rng: &mut R,
    ) {
        let threshold = 0.8f64.ln();
        let mut direction = 0.0;
        for _ in 0..max_rounds {
            let mut z = start.clone();
            z.p = self.metric.sample_momentum(rng);
            let h0 = self.hamiltonian(&z);
            self.leapfrog(target, &mut z, self.step);
            let h = if z.is_valid() { self.hamiltonian(&z) } else { f64::INFINITY };
            let delta = if h.is_nan() { f64::NEG_INFINITY } else { h0 - h };
            let up = delta > threshold;
            if direction == 0.0 {
                direction = if up { 1.0 } else { -1.0 };
            } else if (direction > 0.0) != up {
                break;
            }
            self.step = if direction > 0.0 { self.step * 2.0 } else { self.step * 0.5 };
            if !(self.step > 1e-12 && self.step < 1e7) {
                self.step = self.step.clamp(1e-12, 1e7);
                break;
            }
        }
    }
}

fn initial_point<T: GradientDensity + ?Sized, R: Rng + ?Sized>(target: &T, dim: usize, rng: &mut R) -> Option<PhasePoint> {
    (0..INIT_ATTEMPTS).find_map(|_| {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let z = PhasePoint::new(target, q);
        z.is_valid().then_some(z)
    })
}

pub(super) fn run_chain<T: GradientDensity + ?Sized>(
    target: &T,
    dim: usize,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainDraws, SamplerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);
    let mut z = initial_point(target, dim, &mut rng)
        .ok_or(SamplerError::Initialization { chain, attempts: INIT_ATTEMPTS })?;

    let mut kernel = NutsKernel {
        step: 1.0,
        metric: InverseMetric::identity(dim),
        max_depth: config.max_tree_depth,
    };
    kernel.heuristic_step(target, &z, config.max_step_halvings, &mut rng);

    let restart = |step: f64| DualAverage::with_center(config.target_accept, step, (10.0 * step).ln());
    let schedule = WarmupSchedule::new(config.n_warmup);
    let mut welford = Welford::new(dim);
    let mut dual = restart(kernel.step);
    let mut n_divergent = 0usize;
    let mut warmup_accept = 0.0;
    for iter in 0..config.n_warmup {
        let (next, info) = kernel.transition(target, &z, &mut rng);
        z = next;
        warmup_accept += info.accept_stat;
        dual.advance(info.accept_stat);
        kernel.step = dual.current();
        if schedule.in_window(iter) {
            welford.add(&z.q);
        }
        if schedule.is_window_end(iter) {
            if let Some(metric) = InverseMetric::from_covariance(welford.regularized_covariance(), config.metric) {
                kernel.metric = metric;
            }
            welford.reset();
            kernel.heuristic_step(target, &z, config.max_step_halvings, &mut rng);
            dual = restart(kernel.step);
        }
    }
    if config.n_warmup > 0 {
        kernel.step = dual.adapted();
    }

    let mut draws = Vec::with_capacity(config.n_samples * dim);
    let mut log_density = Vec::with_capacity(config.n_samples);
    let mut accept = 0.0;
    for _ in 0..config.n_samples {
        let (next, info) = kernel.transition(target, &z, &mut rng);
        z = next;
        accept += info.accept_stat;
        n_divergent += usize::from(info.divergent);
        draws.extend_from_slice(&z.q);
        log_density.push(z.log_density);
    }
    Ok(ChainDraws {
        draws,
        log_density,
        warmup_accept_rate: if config.n_warmup > 0 {
            warmup_accept / config.n_warmup as f64
        } else {
            f64::NAN
        },
        accept_rate: accept / config.n_samples as f64,
        step_size: kernel.step,
        n_nonfinite: 0,
        n_divergent,
    })
}
