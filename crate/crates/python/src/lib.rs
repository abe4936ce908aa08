//! Python bindings: data generation, the core model transforms and density,
//! the experiment grid, and the statistical analysis.

#[pyo3::pymodule]
mod catlearn_py {
    use std::str::FromStr;

    use catlearn::datagen::{generate_exemplars, to_observations, DatasetSpec, Exemplar};
    use catlearn::experiment::{
        self, full_grid as grid, Condition as CoreCondition, DataSource, ExperimentConfig, ParticipantRecord,
        DEFAULT_WEIGHT_SETTINGS,
    };
    use catlearn::model::{self, BiasClass, Hyperparams, LatentState};
    use catlearn::sampler::SamplerConfig;
    use catlearn::stats;
    use nalgebra::DMatrix;
    use pyo3::exceptions::PyValueError;
    use pyo3::prelude::*;

    fn value_err(e: impl std::fmt::Display) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    fn bias(name: &str) -> PyResult<BiasClass> {
        BiasClass::from_str(name).map_err(value_err)
    }

    /// One grid cell: domain-bias class x label-bias class at a (w, s) setting.
    #[pyclass(name = "Condition", frozen, from_py_object)]
    #[derive(Clone)]
    pub struct PyCondition {
        inner: CoreCondition,
    }

    #[pymethods]
    impl PyCondition {
        #[new]
        fn new(domain_bias: &str, label_bias: &str, w: f64, s: f64) -> PyResult<Self> {
            Ok(Self {
                inner: CoreCondition::new(bias(domain_bias)?, bias(label_bias)?, w, s),
            })
        }

        #[getter]
        fn domain_bias(&self) -> &'static str {
            self.inner.domain_bias.as_str()
        }

        #[getter]
        fn label_bias(&self) -> &'static str {
            self.inner.label_bias.as_str()
        }

        #[getter]
        fn w(&self) -> f64 {
            self.inner.w
        }

        #[getter]
        fn s(&self) -> f64 {
            self.inner.s
        }

        fn __repr__(&self) -> String {
            format!(
                "Condition(domain_bias='{}', label_bias='{}', w={}, s={})",
                self.inner.domain_bias, self.inner.label_bias, self.inner.w, self.inner.s
            )
        }
    }

    /// One participant's answer for one object in one block.
    #[pyclass(name = "Record", frozen, from_py_object)]
    #[derive(Clone)]
    pub struct PyRecord {
        inner: ParticipantRecord,
    }

    #[pymethods]
    impl PyRecord {
        #[getter]
        fn condition_id(&self) -> usize {
            self.inner.condition_id
        }
        #[getter]
        fn domain_bias(&self) -> &'static str {
            self.inner.domain_bias.as_str()
        }
        #[getter]
        fn label_bias(&self) -> &'static str {
            self.inner.label_bias.as_str()
        }
        #[getter]
        fn w(&self) -> f64 {
            self.inner.w
        }
        #[getter]
        fn s(&self) -> f64 {
            self.inner.s
        }
        #[getter]
        fn seed(&self) -> usize {
            self.inner.seed
        }
        #[getter]
        fn block(&self) -> usize {
            self.inner.block
        }
        #[getter]
        fn participant(&self) -> usize {
            self.inner.participant
        }
        #[getter]
        fn object(&self) -> usize {
            self.inner.object
        }
        #[getter]
        fn correct(&self) -> bool {
            self.inner.correct
        }
    }

    /// Every domain x label combination for each (w, s) setting.
    #[pyfunction]
    #[pyo3(signature = (settings=None))]
    fn full_grid(settings: Option<Vec<(f64, f64)>>) -> Vec<PyCondition> {
        let settings = settings.unwrap_or_else(|| DEFAULT_WEIGHT_SETTINGS.to_vec());
        grid(&settings).into_iter().map(|inner| PyCondition { inner }).collect()
    }

    /// Exemplars as `(features, category)` pairs.
    #[pyfunction]
    #[pyo3(signature = (seed=0, n_per_category=8, n_features=2, n_categories=2, mean_separation=2.0, within_sd=0.25))]
    fn generate_dataset(
        seed: u64,
        n_per_category: usize,
        n_features: usize,
        n_categories: usize,
        mean_separation: f64,
        within_sd: f64,
    ) -> PyResult<Vec<(Vec<f64>, usize)>> {
        let spec = DatasetSpec {
            n_per_category,
            n_features,
            n_categories,
            mean_separation,
            within_sd,
            seed,
            ..DatasetSpec::default()
        };
        Ok(generate_exemplars(&spec)
            .map_err(value_err)?
            .into_iter()
            .map(|e| (e.features, e.category))
            .collect())
    }

    /// Maps a bias in [0, 1] to a correlation in [-1, 1].
    #[pyfunction]
    #[pyo3(signature = (x, gamma=10.0))]
    fn power_transform(x: f64, gamma: f64) -> PyResult<f64> {
        model::power_transform(x, gamma).map_err(value_err)
    }

    /// Joint log-density of a latent state for the given exemplars, with
    /// bias classes expanded to concentration vectors.
    #[pyfunction]
    #[pyo3(signature = (p, k, omega, sigma, mu, exemplars, domain_bias, label_bias, w, s, gamma=10.0, sigma_s2=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn log_joint(
        p: Vec<f64>,
        k: Vec<f64>,
        omega: f64,
        sigma: Vec<Vec<f64>>,
        mu: Vec<Vec<f64>>,
        exemplars: Vec<(Vec<f64>, usize)>,
        domain_bias: &str,
        label_bias: &str,
        w: f64,
        s: f64,
        gamma: f64,
        sigma_s2: f64,
    ) -> PyResult<f64> {
        let f = p.len();
        let to_matrix = |rows: &[Vec<f64>]| -> PyResult<DMatrix<f64>> {
            let c = rows.first().map_or(0, Vec::len);
            if rows.len() != f || rows.iter().any(|r| r.len() != c) {
                return Err(PyValueError::new_err("sigma and mu must be F x C nested lists"));
            }
            Ok(DMatrix::from_fn(f, c, |i, j| rows[i][j]))
        };
        let sigma = to_matrix(&sigma)?;
        let mu = to_matrix(&mu)?;
        let c = sigma.ncols();
        let condition = CoreCondition::new(bias(domain_bias)?, bias(label_bias)?, w, s);
        let hyper: Hyperparams = condition.hyperparams(f, c, 0, gamma, sigma_s2).map_err(value_err)?;
        let exemplars: Vec<Exemplar> = exemplars
            .into_iter()
            .map(|(features, category)| Exemplar { features, category })
            .collect();
        let data = to_observations(&exemplars).map_err(value_err)?;
        let state = LatentState { p, k, omega, sigma, mu };
        model::log_joint(&state, &data, &hyper).map_err(value_err)
    }

    /// Runs the block-learning experiment over `conditions`, releasing the
    /// GIL while chains run.
    #[pyfunction]
    #[pyo3(signature = (conditions, n_seeds=5, seed=42, n_blocks=4, n_participants=75, n_chains=4, n_warmup=1000, n_samples=1000))]
    #[allow(clippy::too_many_arguments)]
    fn run_grid(
        py: Python<'_>,
        conditions: Vec<PyCondition>,
        n_seeds: usize,
        seed: u64,
        n_blocks: usize,
        n_participants: usize,
        n_chains: usize,
        n_warmup: usize,
        n_samples: usize,
    ) -> PyResult<Vec<PyRecord>> {
        let conditions: Vec<CoreCondition> = conditions.into_iter().map(|c| c.inner).collect();
        let config = ExperimentConfig {
            n_blocks,
            n_participants,
            sampler: SamplerConfig {
                n_chains,
                n_warmup,
                n_samples,
                ..SamplerConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let source = DataSource::Generate(DatasetSpec::default());
        let out = py
            .detach(|| experiment::run_grid(&conditions, &source, &config, n_seeds, seed))
            .map_err(value_err)?;
        Ok(out.records.into_iter().map(|inner| PyRecord { inner }).collect())
    }

    /// Mean accuracy and standard error per (condition, block), as dicts.
    #[pyfunction]
    fn summarize(py: Python<'_>, records: Vec<PyRecord>) -> PyResult<Vec<Py<PyAny>>> {
        let records: Vec<ParticipantRecord> = records.into_iter().map(|r| r.inner).collect();
        experiment::summarize(&records)
            .into_iter()
            .map(|r| {
                let d = pyo3::types::PyDict::new(py);
                d.set_item("domain_bias", r.domain_bias.as_str())?;
                d.set_item("label_bias", r.label_bias.as_str())?;
                d.set_item("w", r.w)?;
                d.set_item("s", r.s)?;
                d.set_item("block", r.block)?;
                d.set_item("mean_accuracy", r.mean_accuracy)?;
                d.set_item("se", r.se)?;
                d.set_item("n", r.n)?;
                Ok(d.into_any().unbind())
            })
            .collect()
    }

    /// Wald tests per (w, s): a list of `(w, s, [(effect, df, chi2, p), ...])`.
    #[pyfunction]
    fn analyze(records: Vec<PyRecord>) -> PyResult<Vec<(f64, f64, Vec<(String, usize, f64, f64)>)>> {
        let records: Vec<ParticipantRecord> = records.into_iter().map(|r| r.inner).collect();
        let settings = stats::analyze(&records).map_err(value_err)?;
        Ok(settings
            .into_iter()
            .map(|a| {
                let rows = a
                    .rows
                    .into_iter()
                    .map(|r| (r.effect.to_string(), r.df, r.wald_chi2, r.p_value))
                    .collect();
                (a.w, a.s, rows)
            })
            .collect())
    }

    /// Upper tail of the chi-square distribution.
    #[pyfunction]
    fn chi2_sf(x: f64, df: usize) -> PyResult<f64> {
        stats::chi2_sf(x, df).map_err(value_err)
    }
}
