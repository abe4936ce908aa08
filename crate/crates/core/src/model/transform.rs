use nalgebra::DMatrix;

use super::{check_len, invalid, ModelError};

/// Margin kept between an equicorrelation entry and the edge of the
/// positive-definite region.
pub const CORRELATION_EPS: f64 = 1e-6;

/// Inputs to [`power_transform`] may stray outside `[0, 1]` by this much.
pub const SIMPLEX_SLACK: f64 = 1e-12;

/// Weighted mixture `omega * p + (1 - omega) * k` of the two bias vectors.
pub fn combine_biases(p: &[f64], k: &[f64], omega: f64) -> Result<Vec<f64>, ModelError> {
    check_len("label bias", p.len(), k.len())?;
    Ok(p.iter()
        .zip(k)
        .map(|(pi, ki)| omega * pi + (1.0 - omega) * ki)
        .collect())
}

/// Maps a bias in `[0, 1]` to a correlation in `[-1, 1]` via
/// `2 * (x^(1/gamma) - 0.5)`.
pub fn power_transform(x: f64, gamma: f64) -> Result<f64, ModelError> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("must be >= 1, got {gamma}")));
    }
    if !(x >= -SIMPLEX_SLACK && x <= 1.0 + SIMPLEX_SLACK) {
        return Err(invalid("x", format!("bias {x} outside [0, 1]")));
    }
    let x = x.clamp(0.0, 1.0);
    Ok(2.0 * (x.powf(1.0 / gamma) - 0.5))
}

/// Equicorrelation matrix with off-diagonal `r`, clamped into the open
/// positive-definite interval `(-1/(C-1), 1)`.
pub fn build_correlation(r: f64, n_categories: usize) -> Result<DMatrix<f64>, ModelError> {
    if n_categories < 2 {
        return Err(invalid("n_categories", "need at least two categories"));
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(invalid("r", format!("correlation {r} outside [-1, 1]")));
    }
    let lower = -1.0 / (n_categories as f64 - 1.0) + CORRELATION_EPS;
    let upper = 1.0 - CORRELATION_EPS;
    let off = r.clamp(lower, upper);
    Ok(DMatrix::from_fn(n_categories, n_categories, |m, n| {
        if m == n {
            1.0
        } else {
            off
        }
    }))
}

/// `diag(sigma) * R * diag(sigma)`.
pub fn build_covariance(sigma_row: &[f64], corr: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    let c = sigma_row.len();
    check_len("correlation rows", c, corr.nrows())?;
    check_len("correlation cols", c, corr.ncols())?;
    if sigma_row.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid("sigma", "standard deviations must be positive"));
    }
    Ok(DMatrix::from_fn(c, c, |m, n| sigma_row[m] * sigma_row[n] * corr[(m, n)]))
}

/// Prior covariance of one feature's category means.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCovariance {
    pub feature: usize,
    /// Correlation produced by the power transform, before clamping.
    pub r: f64,
    pub correlation: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
}

impl FeatureCovariance {
    /// Builds the covariance from a combined bias value. Biases pushed off
    /// the unit interval (domain weight above one) are clamped first.
    pub fn from_bias(
        feature: usize,
        bias: f64,
        gamma: f64,
        sigma_row: &[f64],
    ) -> Result<Self, ModelError> {
        let r = power_transform(bias.clamp(0.0, 1.0), gamma)?;
        let correlation = build_correlation(r, sigma_row.len())?;
        let covariance = build_covariance(sigma_row, &correlation)?;
        Ok(Self {
            feature,
            r,
            correlation,
            covariance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn simplex(raw: &[f64]) -> Vec<f64> {
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_biases(&[0.5, 0.5], &[0.5, 0.5], 0.3).unwrap(), vec![0.5, 0.5]);
        assert_eq!(combine_biases(&[1.0, 0.0], &[0.0, 1.0], 0.25).unwrap(), vec![0.25, 0.75]);
        assert!(combine_biases(&[1.0, 0.0], &[1.0], 0.25).is_err());
    }

    #[test]
    fn power_transform_examples() {
        assert_eq!(power_transform(1.0, 3.7).unwrap(), 1.0);
        assert_eq!(power_transform(0.25, 1.0).unwrap(), -0.5);
        // 2 * (0.5^0.1 - 0.5) with 0.5^0.1 = 0.9330329915368074
        assert_abs_diff_eq!(power_transform(0.5, 10.0).unwrap(), 0.866066, epsilon = 1e-6);
        assert_abs_diff_eq!(
            power_transform(0.5, 10.0).unwrap(),
            2.0 * (0.9330329915368074 - 0.5),
            epsilon = 1e-14
        );
        assert_eq!(power_transform(-1e-13, 2.0).unwrap(), -1.0);
        assert!(power_transform(1.1, 2.0).is_err());
        assert!(power_transform(0.5, 0.9).is_err());
    }

    #[test]
    fn steeper_near_zero() {
        let h = 1e-6;
        let slope = |x: f64| {
            (power_transform(x + h, 10.0).unwrap() - power_transform(x - h, 10.0).unwrap()) / (2.0 * h)
        };
        assert!(slope(0.01) > slope(0.5));
    }

    #[test]
    fn correlation_examples() {
        let r = build_correlation(0.3, 2).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]));

        let r = build_correlation(-0.9, 3).unwrap();
        assert_abs_diff_eq!(r[(0, 1)], -0.5 + 1e-6, epsilon = 1e-15);
        // equicorrelation eigenvalues: 1 + (C-1) rho and 1 - rho
        let rho = r[(0, 1)];
        let eigen = r.clone().symmetric_eigen();
        let smallest = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(smallest, 1.0 + 2.0 * rho, epsilon = 1e-12);
        assert!(smallest > 0.0);

        let r = build_correlation(-1.0, 2).unwrap();
        assert_abs_diff_eq!(r[(0, 1)], -1.0 + 1e-6, epsilon = 1e-15);
        assert!(r.cholesky().is_some());

        assert!(build_correlation(0.5, 1).is_err());
    }

    #[test]
    fn covariance_examples() {
        let corr = build_correlation(0.5, 2).unwrap();
        let cov = build_covariance(&[1.0, 2.0], &corr).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 4.0]));
        let corr = build_correlation(0.0, 2).unwrap();
        assert_eq!(build_covariance(&[1.0, 1.0], &corr).unwrap(), DMatrix::identity(2, 2));
        assert!(build_covariance(&[1.0, 0.0], &corr).is_err());
    }

    proptest! {
        #[test]
        fn combined_bias_stays_on_simplex(
            raw_p in prop::collection::vec(0.01f64..10.0, 2..6),
            raw_k in prop::collection::vec(0.01f64..10.0, 6),
            omega in 0.0f64..=1.0,
        ) {
            let p = simplex(&raw_p);
            let k = simplex(&raw_k[..p.len()]);
            let b = combine_biases(&p, &k, omega).unwrap();
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn power_transform_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, gamma in 1.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(power_transform(lo, gamma).unwrap() <= power_transform(hi, gamma).unwrap());
            prop_assert_eq!(power_transform(0.0, gamma).unwrap(), -1.0);
            prop_assert_eq!(power_transform(1.0, gamma).unwrap(), 1.0);
            prop_assert_eq!(power_transform(a, 1.0).unwrap(), 2.0 * (a - 0.5));
        }

        #[test]
        fn clamped_correlation_factorizes(r in -1.0f64..=1.0, c in 2usize..8) {
            prop_assert!(build_correlation(r, c).unwrap().cholesky().is_some());
        }

        #[test]
        fn covariance_matches_definition(
            sigma in prop::collection::vec(0.01f64..5.0, 2..5),
            r in -1.0f64..=1.0,
        ) {
            let corr = build_correlation(r, sigma.len()).unwrap();
            let cov = build_covariance(&sigma, &corr).unwrap();
            for m in 0..sigma.len() {
                for n in 0..sigma.len() {
                    prop_assert_eq!(cov[(m, n)], sigma[m] * sigma[n] * corr[(m, n)]);
                }
            }
        }
    }
}
