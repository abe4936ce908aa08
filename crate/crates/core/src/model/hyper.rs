use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_len, invalid, ModelError};

/// Fixed parameters of the generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Dirichlet concentration of the domain bias.
    pub alpha_d: Vec<f64>,
    /// Dirichlet concentration of the label bias.
    pub alpha_l: Vec<f64>,
    /// Location of the domain weight.
    pub w: f64,
    /// Scale of the domain weight. Zero pins the weight at `w`.
    pub s: f64,
    /// Power-law exponent of the bias-to-correlation map.
    pub gamma: f64,
    /// Perceptual noise variance added to every category variance.
    pub sigma_s2: f64,
    pub n_features: usize,
    pub n_categories: usize,
}

impl Hyperparams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha_d: Vec<f64>,
        alpha_l: Vec<f64>,
        w: f64,
        s: f64,
        gamma: f64,
        sigma_s2: f64,
        n_features: usize,
        n_categories: usize,
    ) -> Result<Self, ModelError> {
        let hyper = Self {
            alpha_d,
            alpha_l,
            w,
            s,
            gamma,
            sigma_s2,
            n_features,
            n_categories,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_features < 1 {
            return Err(invalid("n_features", "need at least one feature"));
        }
        if self.n_categories < 2 {
            return Err(invalid("n_categories", "need at least two categories"));
        }
        check_len("alpha_d", self.n_features, self.alpha_d.len())?;
        check_len("alpha_l", self.n_features, self.alpha_l.len())?;
        if self.alpha_d.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(invalid("alpha_d", "components must be positive and finite"));
        }
        if self.alpha_l.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(invalid("alpha_l", "components must be positive and finite"));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(invalid("w", format!("must be finite and >= 0, got {}", self.w)));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(invalid("s", format!("must be finite and >= 0, got {}", self.s)));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be >= 1, got {}", self.gamma)));
        }
        if !(self.sigma_s2 > 0.0 && self.sigma_s2.is_finite()) {
            return Err(invalid("sigma_s2", format!("must be > 0, got {}", self.sigma_s2)));
        }
        Ok(())
    }

    /// Whether the domain weight is a sampled latent (false when `s == 0`).
    pub fn samples_omega(&self) -> bool {
        self.s > 0.0
    }
}

/// Alignment of a bias-induced prior with the true category structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasClass {
    Right,
    None,
    Wrong,
}

/// Which entry of a bias-class pair lands on the diagnostic feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaOrientation {
    /// The first entry of the pair goes to the diagnostic feature.
    #[default]
    DiagnosticFirst,
    /// The second entry of the pair goes to the diagnostic feature.
    DiagnosticSecond,
}

impl BiasClass {
    pub const ALL: [BiasClass; 3] = [BiasClass::Right, BiasClass::None, BiasClass::Wrong];

    /// Concentration pair for this class.
    pub fn alpha_pair(self) -> (f64, f64) {
        match self {
            BiasClass::Right => (1.0, 10.0),
            BiasClass::None => (10.0, 10.0),
            BiasClass::Wrong => (10.0, 1.0),
        }
    }

    /// Expands the pair to a length-`n_features` concentration vector: the
    /// diagnostic feature receives one entry of the pair and every other
    /// feature the remaining entry.
    pub fn alpha_vector(
        self,
        n_features: usize,
        diagnostic: usize,
        orientation: AlphaOrientation,
    ) -> Vec<f64> {
        let (first, second) = self.alpha_pair();
        let (diag, rest) = match orientation {
            AlphaOrientation::DiagnosticFirst => (first, second),
            AlphaOrientation::DiagnosticSecond => (second, first),
        };
        (0..n_features)
            .map(|i| if i == diagnostic { diag } else { rest })
            .collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiasClass::Right => "right",
            BiasClass::None => "none",
            BiasClass::Wrong => "wrong",
        }
    }
}

impl fmt::Display for BiasClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "right" => Ok(BiasClass::Right),
            "none" => Ok(BiasClass::None),
            "wrong" => Ok(BiasClass::Wrong),
            other => Err(invalid("bias_class", format!("unknown bias class '{other}'"))),
        }
    }
}
