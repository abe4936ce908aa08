use statrs::distribution::{ContinuousCDF, Normal};

use super::{PosteriorDraws, SamplerError};

/// Per-coordinate convergence summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn check_shape(chains: usize, draws: usize) -> Result<(), SamplerError> {
    if chains < 2 || draws < 4 {
        return Err(SamplerError::InsufficientDraws { chains, draws });
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Splits every chain into two halves, dropping the middle draw of odd-length
/// chains.
fn split_halves<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            [&c[..half], &c[c.len() - half..]]
        })
        .collect()
}

/// Split-chain potential scale reduction for one coordinate.
///
/// Constant chains give 1 when they agree and infinity when they do not.
pub fn split_rhat_chains(chains: &[&[f64]]) -> f64 {
    let halves = split_halves(chains);
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = mean(&means);
    let between = n * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let within = halves
        .iter()
        .zip(&means)
        .map(|(h, &mu)| sample_var(h, mu))
        .sum::<f64>()
        / m;
    if within <= 0.0 {
        return if between <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// applied to the averaged autocorrelation of the given (already split)
/// chains.
fn ess_of_chains(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocovariance(c, mu, 0)).collect();
    let chain_var: Vec<f64> = acov0.iter().map(|a| a * n as f64 / (n as f64 - 1.0)).collect();
    let mean_var = mean(&chain_var);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += sample_var(&means, mean(&means));
    }
    if !(var_plus > 0.0) {
        return total;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (mean_var - mean_acov) / var_plus
    };

    let mut rho_hat = vec![0.0; n + 1];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut s = 1;
    while s + 4 < n && even + odd > 0.0 {
        even = rho(s + 1);
        odd = rho(s + 2);
        if even + odd >= 0.0 {
            rho_hat[s + 1] = even;
            rho_hat[s + 2] = odd;
        }
        s += 2;
    }
    let max_s = s;
    if even > 0.0 {
        rho_hat[max_s + 1] = even;
    }
    // initial positive sequence -> initial monotone sequence
    let mut t = 1;
    while t + 3 <= max_s {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }
    let tau = -1.0 + 2.0 * rho_hat[..max_s].iter().sum::<f64>() + rho_hat[max_s + 1];
    (total / tau).min(total)
}

/// Rank-normalised, split-chain bulk effective sample size for one coordinate,
/// capped at the total number of draws.
pub fn ess_bulk_chains(chains: &[&[f64]]) -> f64 {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let z = rank_normalize(&pooled);
    let mut offset = 0;
    let normalized: Vec<&[f64]> = chains
        .iter()
        .map(|c| {
            let s = &z[offset..offset + c.len()];
            offset += c.len();
            s
        })
        .collect();
    let halves = split_halves(&normalized);
    ess_of_chains(&halves).min(total as f64)
}

/// Fractional ranks (ties averaged) mapped through the normal quantile.
fn rank_normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    ranks
        .iter()
        .map(|r| normal.inverse_cdf((r - 0.375) / (n as f64 + 0.25)))
        .collect()
}

fn per_coordinate(draws: &PosteriorDraws, f: impl Fn(&[&[f64]]) -> f64) -> Result<Vec<f64>, SamplerError> {
    check_shape(draws.n_chains(), draws.n_samples)?;
    Ok((0..draws.dim)
        .map(|d| {
            let traces = draws.coordinate(d);
            let refs: Vec<&[f64]> = traces.iter().map(Vec::as_slice).collect();
            f(&refs)
        })
        .collect())
}

/// Split R-hat for every coordinate.
pub fn split_rhat(draws: &PosteriorDraws) -> Result<Vec<f64>, SamplerError> {
    per_coordinate(draws, split_rhat_chains)
}

/// Bulk effective sample size for every coordinate.
pub fn ess(draws: &PosteriorDraws) -> Result<Vec<f64>, SamplerError> {
    per_coordinate(draws, ess_bulk_chains)
}

pub fn diagnose(draws: &PosteriorDraws) -> Result<Diagnostics, SamplerError> {
    Ok(Diagnostics {
        rhat: split_rhat(draws)?,
        ess: ess(draws)?,
    })
}

/// Componentwise mean and standard deviation of transformed draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Applies `constrain` to every pooled draw and summarises each output
/// coordinate.
pub fn posterior_summary<F>(draws: &PosteriorDraws, constrain: F) -> PosteriorSummary
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut n = 0usize;
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    for x in draws.pooled() {
        let y = constrain(x);
        if n == 0 {
            mean = vec![0.0; y.len()];
            m2 = vec![0.0; y.len()];
        }
        n += 1;
        for ((mu, s), v) in mean.iter_mut().zip(m2.iter_mut()).zip(&y) {
            let delta = v - *mu;
            *mu += delta / n as f64;
            *s += delta * (v - *mu);
        }
    }
    let sd = m2
        .iter()
        .map(|s| if n > 1 { (s / (n - 1) as f64).sqrt() } else { 0.0 })
        .collect();
    PosteriorSummary { mean, sd }
}
