//! Synthetic exemplar generation and the per-feature observation layout used
//! by the likelihood.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("unbalanced categories: category {category} has {got} exemplars, expected {expected}")]
    Unbalanced {
        category: usize,
        expected: usize,
        got: usize,
    },
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One stimulus: a point in feature space with its true category.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub features: Vec<f64>,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n_per_category: usize,
    pub n_features: usize,
    pub n_categories: usize,
    /// Index of the only feature whose category means differ.
    pub diagnostic_feature: usize,
    /// Distance between the outermost category means on the diagnostic feature.
    pub mean_separation: f64,
    pub within_sd: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_per_category: 8,
            n_features: 2,
            n_categories: 2,
            diagnostic_feature: 0,
            mean_separation: 2.0,
            within_sd: 0.25,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_per_category == 0 {
            return Err(DataError::InvalidSpec("n_per_category must be positive".into()));
        }
        if self.n_features == 0 {
            return Err(DataError::InvalidSpec("n_features must be positive".into()));
        }
        if self.n_categories < 2 {
            return Err(DataError::InvalidSpec("n_categories must be at least 2".into()));
        }
        if self.diagnostic_feature >= self.n_features {
            return Err(DataError::InvalidSpec(format!(
                "diagnostic_feature {} out of range for {} features",
                self.diagnostic_feature, self.n_features
            )));
        }
        if !(self.within_sd > 0.0 && self.within_sd.is_finite()) {
            return Err(DataError::InvalidSpec("within_sd must be positive".into()));
        }
        if !self.mean_separation.is_finite() {
            return Err(DataError::InvalidSpec("mean_separation must be finite".into()));
        }
        Ok(())
    }

    /// Diagnostic-feature mean of category `c`; categories are spread evenly
    /// over `[-sep/2, sep/2]`, so two categories sit at `∓sep/2`.
    pub fn category_mean(&self, c: usize) -> f64 {
        let half = self.mean_separation / 2.0;
        -half + self.mean_separation * c as f64 / (self.n_categories as f64 - 1.0)
    }
}

/// Generates `n_categories * n_per_category` exemplars, grouped by category.
pub fn generate_exemplars(spec: &DatasetSpec) -> Result<Vec<Exemplar>, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.within_sd).expect("validated sd");
    let mut out = Vec::with_capacity(spec.n_categories * spec.n_per_category);
    for category in 0..spec.n_categories {
        for _ in 0..spec.n_per_category {
            let features = (0..spec.n_features)
                .map(|i| {
                    let centre = if i == spec.diagnostic_feature {
                        spec.category_mean(category)
                    } else {
                        0.0
                    };
                    centre + noise.sample(&mut rng)
                })
                .collect();
            out.push(Exemplar { features, category });
        }
    }
    Ok(out)
}

/// Generated exemplars together with the feature that separates categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub exemplars: Vec<Exemplar>,
    pub diagnostic_feature: usize,
}

impl Dataset {
    pub fn generate(spec: &DatasetSpec) -> Result<Self, DataError> {
        Ok(Self {
            exemplars: generate_exemplars(spec)?,
            diagnostic_feature: spec.diagnostic_feature,
        })
    }

    pub fn n_features(&self) -> usize {
        self.exemplars.first().map_or(0, |e| e.features.len())
    }

    pub fn n_categories(&self) -> usize {
        self.exemplars.iter().map(|e| e.category + 1).max().unwrap_or(0)
    }

    pub fn observations(&self) -> Result<ObservationSet, DataError> {
        to_observations(&self.exemplars)
    }
}

/// Observed category vectors, one table per feature.
///
/// Row `j` of feature `i` holds the value of feature `i` for the `j`-th
/// exemplar of every category, in category order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    n_features: usize,
    n_categories: usize,
    n_obs: usize,
    /// `values[i]` is row-major `n_obs x n_categories`.
    values: Vec<Vec<f64>>,
}

impl ObservationSet {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    /// Number of category vectors per feature.
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn rows(&self, feature: usize) -> impl Iterator<Item = &[f64]> {
        self.values[feature].chunks_exact(self.n_categories)
    }

    /// Stacks `times` copies of every feature table.
    pub fn replicate(&self, times: usize) -> ObservationSet {
        ObservationSet {
            n_features: self.n_features,
            n_categories: self.n_categories,
            n_obs: self.n_obs * times,
            values: self.values.iter().map(|v| v.repeat(times)).collect(),
        }
    }
}

/// Pairs exemplars across categories by their within-category position.
pub fn to_observations(exemplars: &[Exemplar]) -> Result<ObservationSet, DataError> {
    let first = exemplars
        .first()
        .ok_or_else(|| DataError::Malformed("no exemplars".into()))?;
    let n_features = first.features.len();
    if n_features == 0 {
        return Err(DataError::Malformed("exemplars have no features".into()));
    }
    let n_categories = exemplars.iter().map(|e| e.category).max().unwrap_or(0) + 1;
    if n_categories < 2 {
        return Err(DataError::Malformed("need at least two categories".into()));
    }
    let mut by_category: Vec<Vec<&Exemplar>> = vec![Vec::new(); n_categories];
    for e in exemplars {
        if e.features.len() != n_features {
            return Err(DataError::Malformed(format!(
                "exemplar has {} features, expected {n_features}",
                e.features.len()
            )));
        }
        by_category[e.category].push(e);
    }
    let n_obs = by_category[0].len();
    for (category, group) in by_category.iter().enumerate() {
        if group.len() != n_obs {
            return Err(DataError::Unbalanced {
                category,
                expected: n_obs,
                got: group.len(),
            });
        }
    }
    let values = (0..n_features)
        .map(|i| {
            (0..n_obs)
                .flat_map(|j| by_category.iter().map(move |g| g[j].features[i]))
                .collect()
        })
        .collect();
    Ok(ObservationSet {
        n_features,
        n_categories,
        n_obs,
        values,
    })
}

/// Writes `exemplar_id,category,f0,f1,...` with round-trip float formatting.
pub fn write_exemplars_csv<W: Write>(exemplars: &[Exemplar], out: W) -> Result<(), DataError> {
    let n_features = exemplars.first().map_or(0, |e| e.features.len());
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["exemplar_id".to_string(), "category".to_string()];
    header.extend((0..n_features).map(|i| format!("f{i}")));
    writer.write_record(&header)?;
    for (id, e) in exemplars.iter().enumerate() {
        let mut row = vec![id.to_string(), e.category.to_string()];
        row.extend(e.features.iter().map(|v| format!("{v:?}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_exemplars_csv`], ordered by `exemplar_id`.
pub fn read_exemplars_csv<R: Read>(input: R) -> Result<Vec<Exemplar>, DataError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.get(0) != Some("exemplar_id") || header.get(1) != Some("category") {
        return Err(DataError::Malformed(
            "header must start with exemplar_id,category".into(),
        ));
    }
    for (i, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{i}") {
            return Err(DataError::Malformed(format!("unexpected column '{name}'")));
        }
    }
    let parse = |field: &str, what: &str| -> Result<f64, DataError> {
        field
            .trim()
            .parse::<f64>()
            .map_err(|_| DataError::Malformed(format!("bad {what} value '{field}'")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| DataError::Malformed(format!("bad exemplar_id '{}'", &record[0])))?;
        let category: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| DataError::Malformed(format!("bad category '{}'", &record[1])))?;
        let features = record
            .iter()
            .skip(2)
            .map(|f| parse(f, "feature"))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((id, Exemplar { features, category }));
    }
    rows.sort_by_key(|(id, _)| *id);
    Ok(rows.into_iter().map(|(_, e)| e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: impl Iterator<Item = f64>) -> f64 {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        s / n as f64
    }

    #[test]
    fn default_spec_shape() {
        let ex = generate_exemplars(&DatasetSpec::default()).unwrap();
        assert_eq!(ex.len(), 16);
        for c in 0..2 {
            assert_eq!(ex.iter().filter(|e| e.category == c).count(), 8);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = DatasetSpec {
            seed: 99,
            ..Default::default()
        };
        let a = generate_exemplars(&spec).unwrap();
        let b = generate_exemplars(&spec).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.features.iter().zip(&y.features) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn diagnostic_mean_within_sampling_error() {
        let ex = generate_exemplars(&DatasetSpec::default()).unwrap();
        let m0 = mean(ex.iter().filter(|e| e.category == 0).map(|e| e.features[0]));
        assert!((m0 + 1.0).abs() < 3.0 * 0.25 / 8f64.sqrt());
    }

    #[test]
    fn diagnosticity_over_seeds() {
        let se = 0.25 * (2.0 / 8.0f64).sqrt();
        for seed in 0..20 {
            let ex = generate_exemplars(&DatasetSpec {
                seed,
                ..Default::default()
            })
            .unwrap();
            let m = |c: usize, f: usize| mean(ex.iter().filter(|e| e.category == c).map(|e| e.features[f]));
            assert!((m(1, 0) - m(0, 0) - 2.0).abs() < 4.0 * se);
            assert!((m(1, 1) - m(0, 1)).abs() < 4.0 * se);
        }
    }

    #[test]
    fn spec_validation() {
        let bad = DatasetSpec {
            diagnostic_feature: 2,
            ..Default::default()
        };
        assert!(generate_exemplars(&bad).is_err());
        let bad = DatasetSpec {
            within_sd: 0.0,
            ..Default::default()
        };
        assert!(generate_exemplars(&bad).is_err());
    }

    #[test]
    fn observation_counts() {
        let ex = generate_exemplars(&DatasetSpec::default()).unwrap();
        let obs = to_observations(&ex).unwrap();
        assert_eq!(obs.n_obs(), 8);
        assert_eq!(obs.n_features(), 2);
        assert_eq!(obs.rows(0).count(), 8);
        assert_eq!(obs.replicate(3).n_obs(), 24);
    }

    #[test]
    fn single_exemplar_per_category() {
        let ex = vec![
            Exemplar { features: vec![1.0, 2.0], category: 0 },
            Exemplar { features: vec![3.0, 4.0], category: 1 },
        ];
        let obs = to_observations(&ex).unwrap();
        assert_eq!(obs.rows(0).next().unwrap(), &[1.0, 3.0]);
        assert_eq!(obs.rows(1).next().unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn unbalanced_rejected() {
        let ex = vec![
            Exemplar { features: vec![1.0], category: 0 },
            Exemplar { features: vec![1.0], category: 0 },
            Exemplar { features: vec![3.0], category: 1 },
        ];
        assert!(matches!(to_observations(&ex), Err(DataError::Unbalanced { category: 1, .. })));
    }

    #[test]
    fn pairing_preserves_multiset() {
        let mut ex = generate_exemplars(&DatasetSpec::default()).unwrap();
        let sorted_values = |obs: &ObservationSet, f: usize| {
            let mut v: Vec<f64> = obs.rows(f).flatten().copied().collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let obs = to_observations(&ex).unwrap();
        let mut direct: Vec<f64> = ex.iter().map(|e| e.features[1]).collect();
        direct.sort_by(f64::total_cmp);
        assert_eq!(sorted_values(&obs, 1), direct);

        ex[0..8].reverse();
        let permuted = to_observations(&ex).unwrap();
        assert_ne!(permuted, obs);
        assert_eq!(sorted_values(&permuted, 0), sorted_values(&obs, 0));
    }

    #[test]
    fn csv_round_trip() {
        let ex = generate_exemplars(&DatasetSpec::default()).unwrap();
        let mut buf = Vec::new();
        write_exemplars_csv(&ex, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("exemplar_id,category,f0,f1\n"));
        assert_eq!(text.lines().count(), 17);
        assert_eq!(read_exemplars_csv(buf.as_slice()).unwrap(), ex);
    }
}
