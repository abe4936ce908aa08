use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma_ur;

use super::StatsError;

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-6;
/// Coefficients beyond this magnitude indicate (quasi-)separation.
const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// Inverse Fisher information `(X' W X)^-1`.
    pub model_cov: DMatrix<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Max absolute component of `X'(y - p)` at the returned coefficients.
    pub max_gradient: f64,
}

impl FitResult {
    pub fn model_se(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|i| self.model_cov[(i, i)].sqrt()).collect()
    }
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

/// Gradient `X'(y - p)` and Fisher information `X' W X` at `beta`.
fn score_and_information(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eta = x * beta;
    let mut resid = DVector::zeros(y.len());
    let mut weighted = x.clone();
    for (i, (&e, &yi)) in eta.iter().zip(y).enumerate() {
        let p = logistic(e);
        resid[i] = yi - p;
        let w = p * (1.0 - p);
        weighted.row_mut(i).scale_mut(w);
    }
    (x.transpose() * resid, x.transpose() * weighted)
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64]) -> Result<(), StatsError> {
    if x.nrows() != y.len() {
        return Err(StatsError::Shape(format!("{} design rows but {} responses", x.nrows(), y.len())));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(StatsError::Shape("responses must be 0 or 1".into()));
    }
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-10 * max).count();
    if rank < x.ncols() {
        return Err(StatsError::RankDeficient(format!(
            "design has rank {rank} with {} columns",
            x.ncols()
        )));
    }
    Ok(())
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares (Newton's method with step halving).
pub fn irls_fit(x: &DMatrix<f64>, y: &[f64]) -> Result<FitResult, StatsError> {
    check_inputs(x, y)?;
    let k = x.ncols();
    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(x, y, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let (mut grad, mut info) = score_and_information(x, y, &beta);
    while iterations < MAX_ITER {
        let Some(chol) = info.clone().cholesky() else {
            // weights collapse to zero when fitted probabilities run off to 0 or 1
            return Err(if iterations > 0 {
                StatsError::Separation { iterations }
            } else {
                StatsError::RankDeficient("Fisher information is singular".into())
            });
        };
        let step = chol.solve(&grad);
        // Under separation the gradient decays geometrically while Newton steps
        // stay O(1), so a small gradient alone is not convergence.
        if grad.amax() < GRAD_TOL && step.amax() < STEP_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = log_likelihood(x, y, &candidate);
        // guard against overshooting; Newton on the logistic likelihood rarely needs it
        while cand_ll < ll - 1e-12 * ll.abs() && scale > 1e-6 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = log_likelihood(x, y, &candidate);
        }
        beta = candidate;
        ll = cand_ll;
        if beta.amax() > SEPARATION_BOUND {
            return Err(StatsError::Separation { iterations });
        }
        (grad, info) = score_and_information(x, y, &beta);
    }
    let model_cov = info
        .cholesky()
        .ok_or_else(|| StatsError::RankDeficient("Fisher information is singular".into()))?
        .inverse();
    Ok(FitResult {
        beta: beta.iter().copied().collect(),
        model_cov,
        log_likelihood: ll,
        converged,
        iterations,
        max_gradient: grad.amax(),
    })
}

/// Cluster-robust covariance `B (sum_g s_g s_g') B` with bread
/// `B = (X' W X)^-1` and per-cluster score sums `s_g`.
pub fn sandwich_cov(x: &DMatrix<f64>, y: &[f64], fit: &FitResult, clusters: &[usize]) -> Result<DMatrix<f64>, StatsError> {
    if clusters.len() != y.len() || x.nrows() != y.len() {
        return Err(StatsError::Shape("clusters, design and responses differ in length".into()));
    }
    let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut seen = vec![false; n_clusters];
        clusters.iter().for_each(|&c| seen[c] = true);
        seen.iter().filter(|s| **s).count()
    };
    if distinct < 2 {
        return Err(StatsError::TooFewClusters(distinct));
    }
    let k = x.ncols();
    let beta = DVector::from_column_slice(&fit.beta);
    let eta = x * &beta;
    let mut scores = DMatrix::zeros(n_clusters, k);
    for (i, (&e, &yi)) in eta.iter().zip(y).enumerate() {
        let r = yi - logistic(e);
        let mut row = scores.row_mut(clusters[i]);
        row += x.row(i) * r;
    }
    let meat = scores.transpose() * &scores;
    let bread = &fit.model_cov;
    let v = bread * meat * bread;
    Ok((&v + v.transpose()) * 0.5)
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, df: usize) -> Result<f64, StatsError> {
    if df == 0 {
        return Err(StatsError::InvalidDf(df));
    }
    if x.is_nan() || x < 0.0 {
        return Err(StatsError::Shape(format!("chi-square statistic must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, x / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldTest {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Joint Wald test that the coefficients in `group` are all zero.
pub fn wald_group_test(beta: &[f64], cov: &DMatrix<f64>, group: &[usize]) -> Result<WaldTest, StatsError> {
    if group.is_empty() || group.iter().any(|&g| g >= beta.len() || g >= cov.nrows()) {
        return Err(StatsError::Shape(format!("column group {group:?} out of range")));
    }
    let b = DVector::from_iterator(group.len(), group.iter().map(|&g| beta[g]));
    let sub = DMatrix::from_fn(group.len(), group.len(), |i, j| cov[(group[i], group[j])]);
    let chol = sub.cholesky().ok_or(StatsError::SingularCovariance)?;
    let chi2 = b.dot(&chol.solve(&b)).max(0.0);
    Ok(WaldTest {
        chi2,
        df: group.len(),
        p_value: chi2_sf(chi2, group.len())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept_only(ones: usize, zeros: usize) -> (DMatrix<f64>, Vec<f64>) {
        let n = ones + zeros;
        let y = (0..n).map(|i| if i < ones { 1.0 } else { 0.0 }).collect();
        (DMatrix::from_element(n, 1, 1.0), y)
    }

    #[test]
    fn closed_form_logit() {
        let (x, y) = intercept_only(5, 5);
        let fit = irls_fit(&x, &y).unwrap();
        assert!(fit.beta[0].abs() < 1e-12);
        let (x, y) = intercept_only(6, 4);
        let fit = irls_fit(&x, &y).unwrap();
        let oracle = (0.6f64 / 0.4).ln();
        assert!((oracle - 0.405465).abs() < 1e-6);
        assert!((fit.beta[0] - oracle).abs() < 1e-8);
        assert!(fit.converged && fit.max_gradient < 1e-8);
        // Fisher information of n Bernoulli(0.6) draws in logit units
        assert!((fit.model_cov[(0, 0)] - 1.0 / (10.0 * 0.24)).abs() < 1e-10);
    }

    #[test]
    fn separation_and_rank_errors() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, -2.0, 1.0, 1.0, 1.0, 2.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        assert!(matches!(irls_fit(&x, &y), Err(StatsError::Separation { .. })));
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(irls_fit(&x, &[0.0, 1.0, 1.0]), Err(StatsError::RankDeficient(_))));
        assert!(irls_fit(&DMatrix::from_element(2, 1, 1.0), &[0.5, 1.0]).is_err());
    }

    fn simulated(n: usize, beta: &[f64], rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<f64>) {
        let k = beta.len();
        let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let y = (0..n)
            .map(|i| {
                let eta: f64 = (0..k).map(|j| x[(i, j)] * beta[j]).sum();
                if rng.random::<f64>() < logistic(eta) { 1.0 } else { 0.0 }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn singleton_clusters_match_per_row_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = simulated(300, &[0.2, 1.0, -0.5], &mut rng);
        let fit = irls_fit(&x, &y).unwrap();
        let clusters: Vec<usize> = (0..y.len()).collect();
        let v = sandwich_cov(&x, &y, &fit, &clusters).unwrap();
        // heteroskedasticity-robust oracle: B (X' diag(e^2) X) B from dense products
        let beta = DVector::from_column_slice(&fit.beta);
        let p: Vec<f64> = (&x * &beta).iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
        let e2 = DMatrix::from_diagonal(&DVector::from_iterator(y.len(), y.iter().zip(&p).map(|(a, b)| (a - b).powi(2))));
        let w = DMatrix::from_diagonal(&DVector::from_iterator(y.len(), p.iter().map(|q| q * (1.0 - q))));
        let bread = (x.transpose() * w * &x).try_inverse().unwrap();
        let oracle = &bread * (x.transpose() * e2 * &x) * &bread;
        assert!((v - oracle).amax() < 1e-10);
    }

    #[test]
    fn duplicated_clusters_keep_robust_se() {
        // doubling every cluster's rows halves the bread and doubles each
        // cluster score, so B M B is unchanged while model SEs shrink by sqrt 2
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y) = simulated(200, &[-0.3, 0.8], &mut rng);
        let clusters: Vec<usize> = (0..200).map(|i| i % 20).collect();
        let fit = irls_fit(&x, &y).unwrap();
        let v = sandwich_cov(&x, &y, &fit, &clusters).unwrap();

        let x2 = DMatrix::from_fn(400, 2, |i, j| x[(i % 200, j)]);
        let y2: Vec<f64> = (0..400).map(|i| y[i % 200]).collect();
        let c2: Vec<usize> = (0..400).map(|i| clusters[i % 200]).collect();
        let fit2 = irls_fit(&x2, &y2).unwrap();
        let v2 = sandwich_cov(&x2, &y2, &fit2, &c2).unwrap();
        for j in 0..2 {
            assert!((fit.beta[j] - fit2.beta[j]).abs() < 1e-10);
            assert!((v2[(j, j)].sqrt() / v[(j, j)].sqrt() - 1.0).abs() < 1e-8);
            let ratio = fit2.model_se()[j] / fit.model_se()[j];
            assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        }
        assert!((&v2 - v2.transpose()).amax() < 1e-12);
        assert!(sandwich_cov(&x, &y, &fit, &vec![0; 200]).is_err());
    }

    #[test]
    fn chi2_reference_values() {
        assert_eq!(chi2_sf(0.0, 3).unwrap(), 1.0);
        assert!((chi2_sf(2.0 * 2f64.ln(), 2).unwrap() - 0.5).abs() < 1e-12);
        // 2 (1 - Phi(1))
        assert!((chi2_sf(1.0, 1).unwrap() - 0.317_310_507_862_914).abs() < 1e-10);
        assert!((chi2_sf(3.841459, 1).unwrap() - 0.05).abs() < 1e-6);
        assert!((chi2_sf(5.991465, 2).unwrap() - 0.05).abs() < 1e-6);
        assert!(chi2_sf(1.0, 0).is_err());
        assert!(chi2_sf(-1.0, 1).is_err());
    }

    #[test]
    fn wald_null_point() {
        let cov = DMatrix::identity(3, 3);
        let t = wald_group_test(&[0.0, 0.0, 1.0], &cov, &[0, 1]).unwrap();
        assert_eq!((t.chi2, t.df, t.p_value), (0.0, 2, 1.0));
        assert!(wald_group_test(&[1.0], &DMatrix::zeros(1, 1), &[0]).is_err());
        assert!(wald_group_test(&[1.0], &cov, &[5]).is_err());
    }

    #[test]
    fn row_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = simulated(500, &[0.1, -0.7, 0.4], &mut rng);
        let fit = irls_fit(&x, &y).unwrap();
        let perm: Vec<usize> = (0..500).map(|i| (i * 7919) % 500).collect();
        let xp = DMatrix::from_fn(500, 3, |i, j| x[(perm[i], j)]);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let fitp = irls_fit(&xp, &yp).unwrap();
        for j in 0..3 {
            assert!((fit.beta[j] - fitp.beta[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn coverage_of_model_based_intervals() {
        let truth = [0.3, -0.8, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 100;
        let mut covered = 0;
        for _ in 0..reps {
            let (x, y) = simulated(10_000, &truth, &mut rng);
            let fit = irls_fit(&x, &y).unwrap();
            let se = fit.model_se();
            if (0..3).all(|j| (fit.beta[j] - truth[j]).abs() <= 3.0 * se[j]) {
                covered += 1;
            }
        }
        assert!(covered >= 95, "{covered} of {reps}");
    }

    proptest! {
        #[test]
        fn p_value_decreases_in_statistic(a in 0.0f64..50.0, b in 0.0f64..50.0, df in 1usize..8) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (plo, phi) = (chi2_sf(lo, df).unwrap(), chi2_sf(hi, df).unwrap());
            prop_assert!(phi <= plo);
            prop_assert!((0.0..=1.0).contains(&plo));
        }
    }
}
