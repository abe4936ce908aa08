use std::f64::consts::{LN_2, PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::{check_len, invalid, ModelError};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Tolerance for a vector to count as lying on the simplex.
const SIMPLEX_TOL: f64 = 1e-8;

/// Log-density of `Dirichlet(alpha)` at `x`.
///
/// Points with a non-positive component carry zero density and yield
/// negative infinity.
pub fn dirichlet_logpdf(x: &[f64], alpha: &[f64]) -> Result<f64, ModelError> {
    check_len("dirichlet point", alpha.len(), x.len())?;
    if alpha.is_empty() {
        return Err(invalid("alpha", "empty concentration vector"));
    }
    if alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(invalid("alpha", "components must be positive and finite"));
    }
    let total: f64 = x.iter().sum();
    if !((total - 1.0).abs() <= SIMPLEX_TOL) {
        return Err(invalid("x", format!("not on the simplex (sum = {total})")));
    }
    if x.iter().any(|xi| *xi <= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let alpha_sum: f64 = alpha.iter().sum();
    let mut lp = ln_gamma(alpha_sum);
    for (&xi, &ai) in x.iter().zip(alpha) {
        lp += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    Ok(lp)
}

/// Draws one point from `Dirichlet(alpha)` by normalising independent gammas.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>, ModelError> {
    if alpha.is_empty() {
        return Err(invalid("alpha", "empty concentration vector"));
    }
    let mut draws = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let gamma = Gamma::new(a, 1.0)
            .map_err(|_| invalid("alpha", "components must be positive and finite"))?;
        draws.push(gamma.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if total <= 0.0 {
        // every gamma underflowed; only reachable for tiny concentrations
        let idx = rng.random_range(0..alpha.len());
        return Ok((0..alpha.len()).map(|i| if i == idx { 1.0 } else { 0.0 }).collect());
    }
    draws.iter_mut().for_each(|d| *d /= total);
    Ok(draws)
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * (2.0 * PI * var).ln() - 0.5 * z * z / var
}

/// `ln Φ(t)` for the standard normal CDF, accurate in both tails.
pub fn log_normal_cdf(t: f64) -> f64 {
    if t > -30.0 {
        let upper = 0.5 * erfc(t / SQRT_2);
        if t > 0.0 {
            (-upper).ln_1p()
        } else {
            (0.5 * erfc(-t / SQRT_2)).ln()
        }
    } else {
        // Mills-ratio asymptotic expansion
        let t2 = t * t;
        let series = 1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2);
        -0.5 * t2 - (-t).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Log-density of `Normal(w, s)` truncated below at zero.
pub fn truncnorm_logpdf(omega: f64, w: f64, s: f64) -> Result<f64, ModelError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid("s", format!("scale must be positive, got {s}")));
    }
    if omega < 0.0 || omega.is_nan() {
        return Ok(f64::NEG_INFINITY);
    }
    let z = (omega - w) / s;
    Ok(-s.ln() - LN_SQRT_2PI - 0.5 * z * z - log_normal_cdf(w / s))
}

/// Half-normal log-density with the given scale; zero density at or below 0.
pub fn half_normal_logpdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 || x.is_nan() {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    LN_2 - scale.ln() - LN_SQRT_2PI - 0.5 * z * z
}

/// Gaussian log-density evaluated through a Cholesky factor of `cov`.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64, ModelError> {
    let d = x.len();
    check_len("mvn mean", d, mean.len())?;
    check_len("mvn covariance rows", d, cov.nrows())?;
    check_len("mvn covariance cols", d, cov.ncols())?;
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(ModelError::NumericalSingularity("mvn covariance"))?;
    let l = chol.l_dirty();
    let mut resid = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    // forward substitution against the lower triangle only
    for i in 0..d {
        let mut acc = resid[i];
        for j in 0..i {
            acc -= l[(i, j)] * resid[j];
        }
        resid[i] = acc / l[(i, i)];
    }
    let log_det_half: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
    Ok(-(d as f64) * LN_SQRT_2PI - log_det_half - 0.5 * resid.norm_squared())
}
