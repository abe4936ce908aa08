//! Fused log-posterior and gradient over the unconstrained coordinates.
//!
//! Mirrors [`ModelTarget::log_posterior`] term by term, but works on
//! per-cell sufficient statistics and folds the whitened-mean Jacobian into
//! a standard-normal density, so one pass yields the value and the exact
//! gradient.

use super::state::{softplus, ModelTarget};
use super::transform::CORRELATION_EPS;
use super::Hyperparams;
use crate::datagen::ObservationSet;
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Count, sum and sum of squares of the observations in each
/// (feature, category) cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CellStats {
    n: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl CellStats {
    pub(crate) fn new(data: &ObservationSet) -> Self {
        let (f, c) = (data.n_features(), data.n_categories());
        let mut sum = vec![0.0; f * c];
        let mut sum_sq = vec![0.0; f * c];
        for i in 0..f {
            for row in data.rows(i) {
                for (j, &y) in row.iter().enumerate() {
                    sum[i * c + j] += y;
                    sum_sq[i * c + j] += y * y;
                }
            }
        }
        Self {
            n: data.n_obs() as f64,
            sum,
            sum_sq,
        }
    }
}

/// Stick-breaking point with everything the backward pass needs.
struct Stick {
    ln_x: Vec<f64>,
    x: Vec<f64>,
    /// Break fractions `z_j`.
    frac: Vec<f64>,
    log_jac: f64,
}

fn stick_forward(y: &[f64]) -> Stick {
    let f = y.len() + 1;
    let mut ln_x = Vec::with_capacity(f);
    let mut frac = Vec::with_capacity(f - 1);
    let mut ln_rem = 0.0;
    let mut log_jac = 0.0;
    for (j, &yj) in y.iter().enumerate() {
        let u = yj - ((f - 1 - j) as f64).ln();
        let ln_z = -softplus(-u);
        let ln_1mz = -softplus(u);
        ln_x.push(ln_rem + ln_z);
        log_jac += ln_rem + ln_z + ln_1mz;
        ln_rem += ln_1mz;
        frac.push(ln_z.exp());
    }
    ln_x.push(ln_rem);
    let x = ln_x.iter().map(|v| v.exp()).collect();
    Stick {
        ln_x,
        x,
        frac,
        log_jac,
    }
}

/// Pulls `g_ln_x = d(target)/d(ln x_j)` back through the stick-breaking map,
/// adding the gradient of its own log-Jacobian, into `out`.
fn stick_backward(stick: &Stick, g_ln_x: &[f64], out: &mut [f64]) {
    let f = g_ln_x.len();
    let mut tail = g_ln_x[f - 1];
    for j in (0..f - 1).rev() {
        // tail = sum of g over components after j
        let a = g_ln_x[j] + 1.0;
        let b = tail + (f - 1 - j) as f64;
        let z = stick.frac[j];
        out[j] = a * (1.0 - z) - b * z;
        tail += g_ln_x[j];
    }
}

/// Cholesky factor of the `c x c` equicorrelation matrix with off-diagonal
/// `r`, and its derivative with respect to `r`, both row-major.
fn equicorrelation_factor(r: f64, c: usize) -> (Vec<f64>, Vec<f64>) {
    let mut k = vec![0.0; c * c];
    let mut dk = vec![0.0; c * c];
    // every entry below the diagonal of column m equals the same value
    let (mut s, mut ds) = (0.0f64, 0.0f64);
    for m in 0..c {
        let d = (1.0 - s).sqrt();
        let dd = -ds / (2.0 * d);
        k[m * c + m] = d;
        dk[m * c + m] = dd;
        if m + 1 < c {
            let off = (r - s) / d;
            let doff = ((1.0 - ds) * d - (r - s) * dd) / (d * d);
            for j in m + 1..c {
                k[j * c + m] = off;
                dk[j * c + m] = doff;
            }
            s += off * off;
            ds += 2.0 * off * doff;
        }
    }
    (k, dk)
}

fn dirichlet_norm(alpha: &[f64]) -> f64 {
    ln_gamma(alpha.iter().sum()) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
}

impl ModelTarget {
    /// Log-posterior at `z`, writing its gradient into `grad` when given.
    ///
    /// Agrees with [`ModelTarget::log_posterior`] wherever that is finite.
    pub fn log_posterior_gradient(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let hyper: &Hyperparams = self.hyper();
        let (f, c) = (hyper.n_features, hyper.n_categories);
        if z.len() != self.dim() || z.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let stats = self.stats();
        let gamma = hyper.gamma;
        let r_lo = -1.0 / (c as f64 - 1.0) + CORRELATION_EPS;
        let r_hi = 1.0 - CORRELATION_EPS;

        let p = stick_forward(&z[..f - 1]);
        let k = stick_forward(&z[f - 1..2 * (f - 1)]);
        let mut at = 2 * (f - 1);
        let omega_at = at;
        let omega = if hyper.samples_omega() {
            at += 1;
            z[omega_at].exp()
        } else {
            hyper.w
        };
        let sigma_at = at;
        let white_at = at + f * c;

        let mut lp = dirichlet_norm(&hyper.alpha_d)
            + dirichlet_norm(&hyper.alpha_l)
            + p.log_jac
            + k.log_jac;
        lp += p.ln_x.iter().zip(&hyper.alpha_d).map(|(l, a)| (a - 1.0) * l).sum::<f64>();
        lp += k.ln_x.iter().zip(&hyper.alpha_l).map(|(l, a)| (a - 1.0) * l).sum::<f64>();
        if hyper.samples_omega() {
            let t = (omega - hyper.w) / hyper.s;
            lp += -hyper.s.ln() - LN_SQRT_2PI - 0.5 * t * t - super::log_normal_cdf(hyper.w / hyper.s);
            lp += z[omega_at];
        }

        let want_grad = grad.is_some();
        let mut g = vec![0.0; if want_grad { z.len() } else { 0 }];
        let mut g_bias = vec![0.0; f];
        let mut v = vec![0.0; c];
        let mut dv = vec![0.0; c];
        let mut g_mu = vec![0.0; c];

        for i in 0..f {
            let b_raw = omega * p.x[i] + (1.0 - omega) * k.x[i];
            let b = b_raw.clamp(0.0, 1.0);
            let root = b.powf(1.0 / gamma);
            let r_raw = 2.0 * (root - 0.5);
            let r = r_raw.clamp(r_lo, r_hi);
            let (kf, dkf) = equicorrelation_factor(r, c);
            let u = &z[white_at + i * c..white_at + (i + 1) * c];
            for row in 0..c {
                v[row] = (0..=row).map(|m| kf[row * c + m] * u[m]).sum();
                dv[row] = (0..=row).map(|m| dkf[row * c + m] * u[m]).sum();
            }
            lp += -0.5 * c as f64 * LN_2PI - 0.5 * u.iter().map(|x| x * x).sum::<f64>();

            let mut g_r = 0.0;
            for j in 0..c {
                let cell = i * c + j;
                let log_sigma = z[sigma_at + cell];
                let sigma = log_sigma.exp();
                let mu = sigma * v[j];
                let tau = sigma * sigma + hyper.sigma_s2;
                let (n, s1, s2) = (stats.n, stats.sum[cell], stats.sum_sq[cell]);
                let q = s2 - 2.0 * mu * s1 + n * mu * mu;
                lp += -0.5 * n * (LN_2PI + tau.ln()) - 0.5 * q / tau;
                lp += std::f64::consts::LN_2 - LN_SQRT_2PI - 0.5 * sigma * sigma + log_sigma;
                if want_grad {
                    let gm = (s1 - n * mu) / tau;
                    let g_tau = -0.5 * n / tau + 0.5 * q / (tau * tau);
                    let g_sigma = gm * v[j] + g_tau * 2.0 * sigma - sigma;
                    g[sigma_at + cell] = sigma * g_sigma + 1.0;
                    g_mu[j] = gm;
                    g_r += gm * sigma * dv[j];
                }
            }
            if want_grad {
                // u gradient: K^T (sigma ⊙ g_mu) - u
                for m in 0..c {
                    let back: f64 = (m..c)
                        .map(|row| kf[row * c + m] * z[sigma_at + i * c + row].exp() * g_mu[row])
                        .sum();
                    g[white_at + i * c + m] = back - u[m];
                }
                let r_free = r_raw > r_lo && r_raw < r_hi && b_raw > 0.0 && b_raw < 1.0;
                g_bias[i] = if r_free { g_r * 2.0 / gamma * root / b } else { 0.0 };
            }
        }

        if let Some(out) = grad {
            let g_ln_p: Vec<f64> = (0..f)
                .map(|j| hyper.alpha_d[j] - 1.0 + g_bias[j] * omega * p.x[j])
                .collect();
            let g_ln_k: Vec<f64> = (0..f)
                .map(|j| hyper.alpha_l[j] - 1.0 + g_bias[j] * (1.0 - omega) * k.x[j])
                .collect();
            stick_backward(&p, &g_ln_p, &mut g[..f - 1]);
            stick_backward(&k, &g_ln_k, &mut g[f - 1..2 * (f - 1)]);
            if hyper.samples_omega() {
                let mut g_omega = -(omega - hyper.w) / (hyper.s * hyper.s);
                g_omega += (0..f).map(|j| g_bias[j] * (p.x[j] - k.x[j])).sum::<f64>();
                g[omega_at] = omega * g_omega + 1.0;
            }
            out.copy_from_slice(&g);
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}
