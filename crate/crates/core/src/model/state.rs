use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use super::density::{dirichlet_logpdf, half_normal_logpdf, mvn_logpdf, truncnorm_logpdf};
use super::transform::{combine_biases, FeatureCovariance};
use super::{check_len, invalid, Hyperparams, ModelError};
use crate::datagen::ObservationSet;
use super::gradient::CellStats;
use crate::sampler::{GradientDensity, LogDensity};

/// Scale of the half-normal prior on each category standard deviation.
const SIGMA_PRIOR_SCALE: f64 = 1.0;

static SINGULAR_EVALUATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of joint-density evaluations that hit a non-positive-definite
/// covariance and were scored as zero density.
pub fn singular_evaluations() -> u64 {
    SINGULAR_EVALUATIONS.load(Ordering::Relaxed)
}

/// One joint configuration of every latent variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// Domain bias, a simplex over features.
    pub p: Vec<f64>,
    /// Label bias, a simplex over features.
    pub k: Vec<f64>,
    /// Domain weight.
    pub omega: f64,
    /// `n_features x n_categories` standard deviations.
    pub sigma: DMatrix<f64>,
    /// `n_features x n_categories` category means.
    pub mu: DMatrix<f64>,
}

impl LatentState {
    /// Checks shapes against `hyper` and every support constraint.
    pub fn validate(&self, hyper: &Hyperparams) -> Result<(), ModelError> {
        self.check_shape(hyper)?;
        for (name, v) in [("p", &self.p), ("k", &self.k)] {
            let total: f64 = v.iter().sum();
            if (total - 1.0).abs() > 1e-12 || v.iter().any(|x| *x < 0.0) {
                return Err(invalid(name, format!("not on the simplex (sum = {total})")));
            }
        }
        if !(self.omega >= 0.0) {
            return Err(invalid("omega", "must be non-negative"));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("sigma", "entries must be positive"));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(invalid("mu", "entries must be finite"));
        }
        Ok(())
    }

    fn check_shape(&self, hyper: &Hyperparams) -> Result<(), ModelError> {
        let (f, c) = (hyper.n_features, hyper.n_categories);
        check_len("p", f, self.p.len())?;
        check_len("k", f, self.k.len())?;
        check_len("sigma rows", f, self.sigma.nrows())?;
        check_len("sigma cols", c, self.sigma.ncols())?;
        check_len("mu rows", f, self.mu.nrows())?;
        check_len("mu cols", c, self.mu.ncols())?;
        Ok(())
    }

    /// Flat layout `[p, k, omega, sigma (row-major), mu (row-major)]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.p.len() + 1 + 2 * self.sigma.len());
        out.extend_from_slice(&self.p);
        out.extend_from_slice(&self.k);
        out.push(self.omega);
        for m in [&self.sigma, &self.mu] {
            for i in 0..m.nrows() {
                out.extend(m.row(i).iter());
            }
        }
        out
    }

    pub fn from_flat(flat: &[f64], n_features: usize, n_categories: usize) -> Result<Self, ModelError> {
        let (f, c) = (n_features, n_categories);
        check_len("flat latent state", 2 * f + 1 + 2 * f * c, flat.len())?;
        let sigma_start = 2 * f + 1;
        let mu_start = sigma_start + f * c;
        Ok(Self {
            p: flat[..f].to_vec(),
            k: flat[f..2 * f].to_vec(),
            omega: flat[2 * f],
            sigma: DMatrix::from_row_slice(f, c, &flat[sigma_start..mu_start]),
            mu: DMatrix::from_row_slice(f, c, &flat[mu_start..]),
        })
    }

    /// Name of each entry of [`LatentState::to_flat`].
    pub fn flat_names(n_features: usize, n_categories: usize) -> Vec<String> {
        let mut names = Vec::new();
        names.extend((0..n_features).map(|i| format!("p[{i}]")));
        names.extend((0..n_features).map(|i| format!("k[{i}]")));
        names.push("omega".into());
        for prefix in ["sigma", "mu"] {
            for i in 0..n_features {
                names.extend((0..n_categories).map(|c| format!("{prefix}[{i},{c}]")));
            }
        }
        names
    }

    /// Offset of `mu[feature, category]` within the flat layout.
    pub fn flat_mu_index(n_features: usize, n_categories: usize, feature: usize, category: usize) -> usize {
        2 * n_features + 1 + n_features * n_categories + feature * n_categories + category
    }

    /// Offset of `sigma[feature, category]` within the flat layout.
    pub fn flat_sigma_index(n_features: usize, n_categories: usize, feature: usize, category: usize) -> usize {
        2 * n_features + 1 + feature * n_categories + category
    }
}

/// Joint log-density of all latents and the observations.
///
/// Shape mismatches are errors; a state outside the support yields negative
/// infinity.
pub fn log_joint(state: &LatentState, data: &ObservationSet, hyper: &Hyperparams) -> Result<f64, ModelError> {
    state.check_shape(hyper)?;
    check_len("observation features", hyper.n_features, data.n_features())?;
    check_len("observation categories", hyper.n_categories, data.n_categories())?;

    let on_simplex = |v: &[f64]| (v.iter().sum::<f64>() - 1.0).abs() <= 1e-8;
    if !on_simplex(&state.p)
        || !on_simplex(&state.k)
        || !(state.omega >= 0.0)
        || state.sigma.iter().any(|s| !(*s > 0.0))
        || state.mu.iter().any(|m| !m.is_finite())
    {
        return Ok(f64::NEG_INFINITY);
    }

    let mut lp = dirichlet_logpdf(&state.p, &hyper.alpha_d)? + dirichlet_logpdf(&state.k, &hyper.alpha_l)?;
    if hyper.samples_omega() {
        lp += truncnorm_logpdf(state.omega, hyper.w, hyper.s)?;
    } else if state.omega != hyper.w {
        return Ok(f64::NEG_INFINITY);
    }
    if !lp.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }

    lp += state
        .sigma
        .iter()
        .map(|&s| half_normal_logpdf(s, SIGMA_PRIOR_SCALE))
        .sum::<f64>();

    let bias = combine_biases(&state.p, &state.k, state.omega)?;
    let c = hyper.n_categories;
    let zeros = vec![0.0; c];
    let mut sigma_row = vec![0.0; c];
    let mut mu_row = vec![0.0; c];
    for (i, &b) in bias.iter().enumerate() {
        sigma_row.iter_mut().zip(state.sigma.row(i).iter()).for_each(|(d, s)| *d = *s);
        mu_row.iter_mut().zip(state.mu.row(i).iter()).for_each(|(d, m)| *d = *m);
        let cov = FeatureCovariance::from_bias(i, b, hyper.gamma, &sigma_row)?;
        match mvn_logpdf(&mu_row, &zeros, &cov.covariance) {
            Ok(v) => lp += v,
            Err(ModelError::NumericalSingularity(_)) => {
                let n = SINGULAR_EVALUATIONS.fetch_add(1, Ordering::Relaxed);
                if n == 0 {
                    log::warn!("singular prior covariance for feature {i}; scoring as zero density");
                }
                return Ok(f64::NEG_INFINITY);
            }
            Err(e) => return Err(e),
        }
        lp += diag_gaussian_loglik(data, i, &mu_row, &sigma_row, hyper.sigma_s2);
    }
    Ok(lp)
}

/// Sum over observation rows of `MVN(y; mu, diag(sigma^2) + sigma_s2 I)`.
fn diag_gaussian_loglik(data: &ObservationSet, feature: usize, mu: &[f64], sigma: &[f64], sigma_s2: f64) -> f64 {
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    let mut quad = 0.0;
    for row in data.rows(feature) {
        for ((y, m), s) in row.iter().zip(mu).zip(sigma) {
            let z = y - m;
            quad += z * z / (s * s + sigma_s2);
        }
    }
    let log_det: f64 = sigma.iter().map(|s| (s * s + sigma_s2).ln()).sum();
    let n = data.n_obs() as f64;
    -0.5 * quad - 0.5 * n * (log_det + sigma.len() as f64 * LN_2PI)
}

/// Length of the unconstrained parameter vector for `hyper`.
pub fn unconstrained_dim(hyper: &Hyperparams) -> usize {
    let f = hyper.n_features;
    2 * (f - 1) + usize::from(hyper.samples_omega()) + 2 * f * hyper.n_categories
}

pub(super) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Stick-breaking map from `R^(F-1)` onto the interior of the simplex.
/// Returns the simplex point and its log-absolute-Jacobian.
fn stick_breaking(y: &[f64]) -> (Vec<f64>, f64) {
    let f = y.len() + 1;
    let mut out = Vec::with_capacity(f);
    let mut remaining = 1.0;
    let mut log_jac = 0.0;
    for (j, &yj) in y.iter().enumerate() {
        let u = yj - ((f - 1 - j) as f64).ln();
        let z = 1.0 / (1.0 + (-u).exp());
        let x = remaining * z;
        log_jac += remaining.ln() - softplus(-u) - softplus(u);
        remaining -= x;
        out.push(x);
    }
    out.push(remaining);
    (out, log_jac)
}

fn inverse_stick_breaking(x: &[f64], name: &'static str) -> Result<Vec<f64>, ModelError> {
    let f = x.len();
    let mut out = Vec::with_capacity(f - 1);
    let mut remaining = 1.0;
    for (j, &xj) in x[..f - 1].iter().enumerate() {
        let z = xj / remaining;
        if !(z > 0.0 && z < 1.0) {
            return Err(invalid(name, "boundary point has no unconstrained image"));
        }
        out.push((z / (1.0 - z)).ln() + ((f - 1 - j) as f64).ln());
        remaining -= xj;
    }
    if !(x[f - 1] > 0.0) {
        return Err(invalid(name, "boundary point has no unconstrained image"));
    }
    Ok(out)
}

/// Maps an interior state to unconstrained coordinates.
///
/// Layout: stick-breaking logits of `p` and `k`, `ln ω` (only when ω is
/// sampled), `ln σ` row-major, then the category means in whitened form
/// `z_i = L_i⁻¹ μ_i`, where `L_i` is the Cholesky factor of feature `i`'s
/// prior covariance. Whitening removes the funnel between `σ` and `μ` and the
/// near-degenerate ridge that strong correlations carve into `μ`.
pub fn unconstrain(state: &LatentState, hyper: &Hyperparams) -> Result<Vec<f64>, ModelError> {
    state.validate(hyper)?;
    let mut z = Vec::with_capacity(unconstrained_dim(hyper));
    z.extend(inverse_stick_breaking(&state.p, "p")?);
    z.extend(inverse_stick_breaking(&state.k, "k")?);
    if hyper.samples_omega() {
        if !(state.omega > 0.0) {
            return Err(invalid("omega", "zero domain weight has no unconstrained image"));
        }
        z.push(state.omega.ln());
    }
    for i in 0..hyper.n_features {
        z.extend(state.sigma.row(i).iter().map(|s| s.ln()));
    }
    let factors = prior_factors(&state.p, &state.k, state.omega, &state.sigma, hyper)?;
    for (i, l) in factors.iter().enumerate() {
        let mu = DVector::from_iterator(hyper.n_categories, state.mu.row(i).iter().copied());
        let white = l
            .solve_lower_triangular(&mu)
            .ok_or(ModelError::NumericalSingularity("prior covariance factor"))?;
        z.extend(white.iter());
    }
    Ok(z)
}

/// Lower Cholesky factor of each feature's prior covariance over category means.
fn prior_factors(
    p: &[f64],
    k: &[f64],
    omega: f64,
    sigma: &DMatrix<f64>,
    hyper: &Hyperparams,
) -> Result<Vec<DMatrix<f64>>, ModelError> {
    let bias = combine_biases(p, k, omega)?;
    let mut sigma_row = Vec::with_capacity(sigma.ncols());
    bias.iter()
        .enumerate()
        .map(|(i, &b)| {
            sigma_row.clear();
            sigma_row.extend(sigma.row(i).iter());
            let cov = FeatureCovariance::from_bias(i, b, hyper.gamma, &sigma_row)?;
            cov.covariance
                .cholesky()
                .map(|c| c.unpack())
                .ok_or(ModelError::NumericalSingularity("prior covariance factor"))
        })
        .collect()
}

/// Inverse of [`unconstrain`] together with the log-absolute-Jacobian of the map.
pub fn constrain_with_jacobian(z: &[f64], hyper: &Hyperparams) -> Result<(LatentState, f64), ModelError> {
    check_len("unconstrained vector", unconstrained_dim(hyper), z.len())?;
    let (f, c) = (hyper.n_features, hyper.n_categories);
    let (p, jac_p) = stick_breaking(&z[..f - 1]);
    let (k, jac_k) = stick_breaking(&z[f - 1..2 * (f - 1)]);
    let mut at = 2 * (f - 1);
    let mut log_jac = jac_p + jac_k;
    let omega = if hyper.samples_omega() {
        log_jac += z[at];
        at += 1;
        z[at - 1].exp()
    } else {
        hyper.w
    };
    let log_sigma = &z[at..at + f * c];
    log_jac += log_sigma.iter().sum::<f64>();
    let sigma = DMatrix::from_row_iterator(f, c, log_sigma.iter().map(|v| v.exp()));
    let white = &z[at + f * c..];
    let mut mu = DMatrix::zeros(f, c);
    for (i, l) in prior_factors(&p, &k, omega, &sigma, hyper)?.iter().enumerate() {
        let row = l * DVector::from_column_slice(&white[i * c..(i + 1) * c]);
        mu.row_mut(i).iter_mut().zip(row.iter()).for_each(|(d, v)| *d = *v);
        log_jac += l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    Ok((LatentState { p, k, omega, sigma, mu }, log_jac))
}

pub fn constrain(z: &[f64], hyper: &Hyperparams) -> Result<LatentState, ModelError> {
    constrain_with_jacobian(z, hyper).map(|(s, _)| s)
}

pub fn log_abs_jacobian(z: &[f64], hyper: &Hyperparams) -> Result<f64, ModelError> {
    constrain_with_jacobian(z, hyper).map(|(_, j)| j)
}

/// Posterior density over unconstrained coordinates for a fixed dataset.
#[derive(Debug, Clone)]
pub struct ModelTarget {
    hyper: Hyperparams,
    data: ObservationSet,
    stats: CellStats,
}

impl ModelTarget {
    pub fn new(hyper: Hyperparams, data: ObservationSet) -> Result<Self, ModelError> {
        hyper.validate()?;
        check_len("observation features", hyper.n_features, data.n_features())?;
        check_len("observation categories", hyper.n_categories, data.n_categories())?;
        let stats = CellStats::new(&data);
        Ok(Self { hyper, data, stats })
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn data(&self) -> &ObservationSet {
        &self.data
    }

    pub(super) fn stats(&self) -> &CellStats {
        &self.stats
    }

    pub fn dim(&self) -> usize {
        unconstrained_dim(&self.hyper)
    }

    /// `log_joint(constrain(z)) + log|J(z)|`.
    pub fn log_posterior(&self, z: &[f64]) -> Result<f64, ModelError> {
        let (state, log_jac) = constrain_with_jacobian(z, &self.hyper)?;
        let lp = log_joint(&state, &self.data, &self.hyper)?;
        Ok(if lp.is_finite() { lp + log_jac } else { f64::NEG_INFINITY })
    }
}

impl LogDensity for ModelTarget {
    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_posterior_gradient(x, None)
    }
}

impl GradientDensity for ModelTarget {
    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior_gradient(x, Some(grad))
    }
}
