use std::path::{Path, PathBuf};

use catlearn::datagen::DatasetSpec;
use catlearn::experiment::{Condition, ExperimentConfig, DEFAULT_WEIGHT_SETTINGS};
use catlearn::model::{AlphaOrientation, BiasClass};
use catlearn::sampler::{Algorithm, Metric, SamplerConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Nuts,
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Diagonal,
    Dense,
}

/// Everything a run needs. Every key is optional in the TOML file; omitted
/// keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Optional dataset CSV used for every replication instead of generated data.
    pub dataset: Option<PathBuf>,

    pub n_per_category: usize,
    pub n_features: usize,
    pub n_categories: usize,
    pub diagnostic_feature: usize,
    pub mean_separation: f64,
    pub within_sd: f64,

    /// `(w, s)` pairs.
    pub settings: Vec<(f64, f64)>,
    pub domain_biases: Vec<BiasClass>,
    pub label_biases: Vec<BiasClass>,
    pub orientation: AlphaOrientation,
    pub gamma: f64,
    pub sigma_s2: f64,
    pub n_blocks: usize,
    pub n_participants: usize,
    pub n_seeds: usize,
    pub rhat_threshold: f64,

    pub algorithm: AlgorithmName,
    pub metric: MetricName,
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = DatasetSpec::default();
        let exp = ExperimentConfig::default();
        let sampler = SamplerConfig::default();
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            dataset: None,
            n_per_category: data.n_per_category,
            n_features: data.n_features,
            n_categories: data.n_categories,
            diagnostic_feature: data.diagnostic_feature,
            mean_separation: data.mean_separation,
            within_sd: data.within_sd,
            settings: DEFAULT_WEIGHT_SETTINGS.to_vec(),
            domain_biases: BiasClass::ALL.to_vec(),
            label_biases: BiasClass::ALL.to_vec(),
            orientation: AlphaOrientation::default(),
            gamma: exp.gamma,
            sigma_s2: exp.sigma_s2,
            n_blocks: exp.n_blocks,
            n_participants: exp.n_participants,
            n_seeds: 5,
            rhat_threshold: exp.rhat_threshold,
            algorithm: AlgorithmName::Nuts,
            metric: MetricName::Diagonal,
            n_chains: sampler.n_chains,
            n_warmup: sampler.n_warmup,
            n_samples: sampler.n_samples,
            target_accept: sampler.target_accept,
            max_tree_depth: sampler.max_tree_depth,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let config: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("n_blocks", self.n_blocks),
            ("n_participants", self.n_participants),
            ("n_seeds", self.n_seeds),
            ("n_chains", self.n_chains),
            ("n_samples", self.n_samples),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("`{name}` must be positive"));
        }
        if self.settings.is_empty() || self.domain_biases.is_empty() || self.label_biases.is_empty() {
            return Err("`settings`, `domain_biases` and `label_biases` must be non-empty".into());
        }
        if let Some((w, s)) = self.settings.iter().find(|(w, s)| !(*w >= 0.0 && *s >= 0.0)) {
            return Err(format!("setting ({w}, {s}): w and s must be non-negative"));
        }
        if !(self.gamma >= 1.0) {
            return Err(format!("`gamma` must be >= 1, got {}", self.gamma));
        }
        if !(self.sigma_s2 > 0.0) {
            return Err(format!("`sigma_s2` must be positive, got {}", self.sigma_s2));
        }
        if self.n_participants > self.n_chains * self.n_samples {
            return Err(format!(
                "{} participants need at least as many posterior draws (n_chains x n_samples = {})",
                self.n_participants,
                self.n_chains * self.n_samples
            ));
        }
        self.sampler().validate().map_err(|e| e.to_string())?;
        self.dataset_spec().validate().map_err(|e| e.to_string())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            n_per_category: self.n_per_category,
            n_features: self.n_features,
            n_categories: self.n_categories,
            diagnostic_feature: self.diagnostic_feature,
            mean_separation: self.mean_separation,
            within_sd: self.within_sd,
            seed: self.seed,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            algorithm: match self.algorithm {
                AlgorithmName::Nuts => Algorithm::Nuts,
                AlgorithmName::RandomWalk => Algorithm::RandomWalk,
            },
            metric: match self.metric {
                MetricName::Diagonal => Metric::Diagonal,
                MetricName::Dense => Metric::Dense,
            },
            n_chains: self.n_chains,
            n_warmup: self.n_warmup,
            n_samples: self.n_samples,
            target_accept: self.target_accept,
            max_tree_depth: self.max_tree_depth,
            ..SamplerConfig::default()
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            n_blocks: self.n_blocks,
            n_participants: self.n_participants,
            gamma: self.gamma,
            sigma_s2: self.sigma_s2,
            sampler: self.sampler(),
            rhat_threshold: self.rhat_threshold,
        }
    }

    /// Setting-major crossing of the configured bias classes.
    pub fn conditions(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        for &(w, s) in &self.settings {
            for &d in &self.domain_biases {
                for &l in &self.label_biases {
                    out.push(Condition {
                        orientation: self.orientation,
                        ..Condition::new(d, l, w, s)
                    });
                }
            }
        }
        out
    }
}
