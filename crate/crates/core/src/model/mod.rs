//! Generative model: bias priors, the bias-to-correlation transform, per-feature
//! covariance construction, and the joint log-density over all latents.

mod density;
mod gradient;
mod hyper;
mod state;
mod transform;

pub use density::{
    dirichlet_logpdf, half_normal_logpdf, log_normal_cdf, mvn_logpdf, normal_logpdf,
    sample_dirichlet, truncnorm_logpdf,
};
pub use hyper::{AlphaOrientation, BiasClass, Hyperparams};
pub use state::{
    constrain, constrain_with_jacobian, log_abs_jacobian, log_joint, singular_evaluations,
    unconstrain, unconstrained_dim, LatentState, ModelTarget,
};
pub use transform::{
    build_correlation, build_covariance, combine_biases, power_transform, FeatureCovariance,
    CORRELATION_EPS, SIMPLEX_SLACK,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("matrix is not positive definite ({0})")]
    NumericalSingularity(&'static str),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
