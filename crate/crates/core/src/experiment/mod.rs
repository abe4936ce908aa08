//! Block-learning simulation: fit the posterior on accumulating evidence,
//! sample simulated participants from it, and score their classifications
//! across the grid of bias conditions.

mod io;

pub use io::{
    read_records_csv, read_summary_csv, write_records_csv, write_summary_csv, RECORD_COLUMNS,
    SUMMARY_COLUMNS,
};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::datagen::{DataError, Dataset, DatasetSpec, Exemplar};
use crate::model::{
    constrain, normal_logpdf, AlphaOrientation, BiasClass, Hyperparams, LatentState, ModelError,
    ModelTarget,
};
use crate::sampler::{
    diagnose, posterior_summary, run_chains, split_rhat_chains, Diagnostics, PosteriorDraws,
    PosteriorSummary, SamplerConfig, SamplerError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("posterior has {available} draws but {needed} participants were requested")]
    TooFewDraws { needed: usize, available: usize },
    #[error("no conditions to run")]
    NoConditions,
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `(w, s)` settings of the domain weight used in the default grid.
pub const DEFAULT_WEIGHT_SETTINGS: [(f64, f64); 3] = [(0.2, 0.0), (0.3, 0.03), (0.5, 0.0)];

/// One cell of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub domain_bias: BiasClass,
    pub label_bias: BiasClass,
    pub w: f64,
    pub s: f64,
    pub orientation: AlphaOrientation,
}

impl Condition {
    pub fn new(domain_bias: BiasClass, label_bias: BiasClass, w: f64, s: f64) -> Self {
        Self {
            domain_bias,
            label_bias,
            w,
            s,
            orientation: AlphaOrientation::default(),
        }
    }

    pub fn hyperparams(
        &self,
        n_features: usize,
        n_categories: usize,
        diagnostic_feature: usize,
        gamma: f64,
        sigma_s2: f64,
    ) -> Result<Hyperparams, ModelError> {
        Hyperparams::new(
            self.domain_bias
                .alpha_vector(n_features, diagnostic_feature, self.orientation),
            self.label_bias
                .alpha_vector(n_features, diagnostic_feature, self.orientation),
            self.w,
            self.s,
            gamma,
            sigma_s2,
            n_features,
            n_categories,
        )
    }

    /// Seed tag that depends only on the condition's content, so a cell
    /// reproduces the same numbers whether run alone or inside a grid.
    fn seed_tag(&self) -> u64 {
        let class = |b: BiasClass| b as u64;
        let orient = match self.orientation {
            AlphaOrientation::DiagnosticFirst => 0,
            AlphaOrientation::DiagnosticSecond => 1,
        };
        mix(&[
            class(self.domain_bias),
            class(self.label_bias),
            self.w.to_bits(),
            self.s.to_bits(),
            orient,
        ])
    }
}

/// Every domain × label combination for each `(w, s)` setting, setting-major.
pub fn full_grid(settings: &[(f64, f64)]) -> Vec<Condition> {
    settings
        .iter()
        .flat_map(|&(w, s)| {
            BiasClass::ALL.into_iter().flat_map(move |d| {
                BiasClass::ALL
                    .into_iter()
                    .map(move |l| Condition::new(d, l, w, s))
            })
        })
        .collect()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn mix(tags: &[u64]) -> u64 {
    tags.iter().fold(0x243F_6A88_85A3_08D3, |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Deterministic child seed for `(base, tags...)`.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut all = Vec::with_capacity(tags.len() + 1);
    all.push(base);
    all.extend_from_slice(tags);
    mix(&all)
}

const TAG_DATASET: u64 = 1;
const TAG_FIT: u64 = 2;
const TAG_PARTICIPANTS: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_blocks: usize,
    pub n_participants: usize,
    pub gamma: f64,
    pub sigma_s2: f64,
    pub sampler: SamplerConfig,
    /// A fit whose worst split R-hat over the category means reaches this
    /// value is refit once with doubled warmup, then flagged.
    pub rhat_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_blocks: 4,
            n_participants: 75,
            gamma: 10.0,
            sigma_s2: 1.0,
            sampler: SamplerConfig::default(),
            rhat_threshold: 1.05,
        }
    }
}

/// Posterior after one learning block.
#[derive(Debug, Clone)]
pub struct BlockPosterior {
    /// 1-based block index.
    pub block: usize,
    /// Category vectors per feature the fit conditioned on.
    pub n_obs: usize,
    pub hyper: Hyperparams,
    pub draws: PosteriorDraws,
    /// Mean and sd of every latent, in the [`LatentState::to_flat`] layout.
    pub summary: PosteriorSummary,
    pub diagnostics: Diagnostics,
    /// Worst split R-hat over the constrained category means.
    pub max_mu_rhat: f64,
    pub retried: bool,
    /// Still above the R-hat threshold after the retry.
    pub flagged: bool,
}

impl BlockPosterior {
    pub fn mu_mean(&self, feature: usize, category: usize) -> f64 {
        let (f, c) = (self.hyper.n_features, self.hyper.n_categories);
        self.summary.mean[LatentState::flat_mu_index(f, c, feature, category)]
    }

    pub fn mu_sd(&self, feature: usize, category: usize) -> f64 {
        let (f, c) = (self.hyper.n_features, self.hyper.n_categories);
        self.summary.sd[LatentState::flat_mu_index(f, c, feature, category)]
    }

    pub fn sigma_mean(&self, feature: usize, category: usize) -> f64 {
        let (f, c) = (self.hyper.n_features, self.hyper.n_categories);
        self.summary.mean[LatentState::flat_sigma_index(f, c, feature, category)]
    }
}

/// Worst split R-hat over the constrained category means.
fn max_mu_rhat(draws: &PosteriorDraws, hyper: &Hyperparams) -> Result<f64, ExperimentError> {
    let (f, c) = (hyper.n_features, hyper.n_categories);
    let mut traces = vec![vec![Vec::with_capacity(draws.n_samples); draws.n_chains()]; f * c];
    for chain in 0..draws.n_chains() {
        for i in 0..draws.n_samples {
            let state = constrain(draws.draw(chain, i), hyper)?;
            for (cell, t) in traces.iter_mut().enumerate() {
                t[chain].push(state.mu[(cell / c, cell % c)]);
            }
        }
    }
    Ok(traces
        .iter()
        .map(|t| split_rhat_chains(&t.iter().map(Vec::as_slice).collect::<Vec<_>>()))
        .fold(f64::NEG_INFINITY, f64::max))
}

struct Fit {
    draws: PosteriorDraws,
    diagnostics: Diagnostics,
    max_mu_rhat: f64,
    retried: bool,
}

fn fit_block(target: &ModelTarget, sampler: &SamplerConfig, rhat_threshold: f64) -> Result<Fit, ExperimentError> {
    let attempt = |config: &SamplerConfig| -> Result<(PosteriorDraws, Diagnostics, f64), ExperimentError> {
        let draws = run_chains(target, target.dim(), config)?;
        let diagnostics = diagnose(&draws)?;
        let worst = max_mu_rhat(&draws, target.hyper())?;
        Ok((draws, diagnostics, worst))
    };
    let (draws, diagnostics, worst) = attempt(sampler)?;
    if worst < rhat_threshold {
        return Ok(Fit { draws, diagnostics, max_mu_rhat: worst, retried: false });
    }
    let retry = SamplerConfig {
        n_warmup: sampler.n_warmup * 2,
        ..sampler.clone()
    };
    let (draws, diagnostics, worst) = attempt(&retry)?;
    Ok(Fit { draws, diagnostics, max_mu_rhat: worst, retried: true })
}

/// Fits one posterior per block; block `b` conditions on `b` copies of the
/// dataset's observations.
pub fn run_block_learning(
    condition: &Condition,
    dataset: &Dataset,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<BlockPosterior>, ExperimentError> {
    let base = dataset.observations()?;
    let hyper = condition.hyperparams(
        dataset.n_features(),
        dataset.n_categories(),
        dataset.diagnostic_feature,
        config.gamma,
        config.sigma_s2,
    )?;
    (1..=config.n_blocks)
        .map(|block| {
            let data = base.replicate(block);
            let n_obs = data.n_obs();
            let target = ModelTarget::new(hyper.clone(), data)?;
            let sampler = SamplerConfig {
                seed: derive_seed(seed, &[TAG_FIT, block as u64]),
                ..config.sampler.clone()
            };
            let Fit { draws, diagnostics, max_mu_rhat, retried } =
                fit_block(&target, &sampler, config.rhat_threshold)?;
            let summary = posterior_summary(&draws, |z| {
                constrain(z, &hyper).map(|s| s.to_flat()).unwrap_or_default()
            });
            if max_mu_rhat >= config.rhat_threshold {
                log::warn!(
                    "block {block}: max R-hat {max_mu_rhat:.3} on category means after retry"
                );
            }
            Ok(BlockPosterior {
                block,
                n_obs,
                hyper: hyper.clone(),
                draws,
                summary,
                diagnostics,
                max_mu_rhat,
                retried,
                flagged: max_mu_rhat >= config.rhat_threshold,
            })
        })
        .collect()
}

/// Most probable category for `exemplar` under one belief state, using
/// `sigma_{i,c}^2 + sigma_s2` as the per-feature variance. Ties go to the
/// lower category index.
pub fn classify_exemplar(exemplar: &Exemplar, belief: &LatentState, sigma_s2: f64) -> usize {
    let n_categories = belief.mu.ncols();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for c in 0..n_categories {
        let score: f64 = exemplar
            .features
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let s = belief.sigma[(i, c)];
                normal_logpdf(x, belief.mu[(i, c)], s * s + sigma_s2)
            })
            .sum();
        if score > best_score {
            best = c;
            best_score = score;
        }
    }
    best
}

/// One simulated participant's answer for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRecord {
    pub condition_id: usize,
    pub domain_bias: BiasClass,
    pub label_bias: BiasClass,
    pub w: f64,
    pub s: f64,
    /// Replication index of the dataset/posterior seed.
    pub seed: usize,
    pub block: usize,
    pub participant: usize,
    pub object: usize,
    pub correct: bool,
}

/// Identifies the grid cell that records belong to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellContext {
    pub condition_id: usize,
    pub condition: Condition,
    pub seed: usize,
}

/// Each participant takes a distinct posterior draw (sampled without
/// replacement from the pooled chains) as their belief and classifies every
/// exemplar with it.
pub fn simulate_participants<R: rand::Rng + ?Sized>(
    posterior: &BlockPosterior,
    dataset: &Dataset,
    n_participants: usize,
    cell: &CellContext,
    rng: &mut R,
) -> Result<Vec<ParticipantRecord>, ExperimentError> {
    let available = posterior.draws.total_draws();
    if available < n_participants {
        return Err(ExperimentError::TooFewDraws {
            needed: n_participants,
            available,
        });
    }
    let pooled: Vec<&[f64]> = posterior.draws.pooled().collect();
    let picks = index::sample(rng, available, n_participants);
    let mut out = Vec::with_capacity(n_participants * dataset.exemplars.len());
    for (participant, idx) in picks.iter().enumerate() {
        let belief = constrain(pooled[idx], &posterior.hyper)?;
        for (object, exemplar) in dataset.exemplars.iter().enumerate() {
            let guess = classify_exemplar(exemplar, &belief, posterior.hyper.sigma_s2);
            out.push(ParticipantRecord {
                condition_id: cell.condition_id,
                domain_bias: cell.condition.domain_bias,
                label_bias: cell.condition.label_bias,
                w: cell.condition.w,
                s: cell.condition.s,
                seed: cell.seed,
                block: posterior.block,
                participant,
                object,
                correct: guess == exemplar.category,
            });
        }
    }
    Ok(out)
}

/// Where each seed replication gets its exemplars.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// A fresh dataset per seed replication, seeded from the master seed.
    Generate(DatasetSpec),
    /// The same dataset for every replication.
    Fixed(Dataset),
}

impl DataSource {
    pub fn dataset(&self, master_seed: u64, seed_index: usize) -> Result<Dataset, ExperimentError> {
        match self {
            DataSource::Generate(spec) => Ok(Dataset::generate(&DatasetSpec {
                seed: derive_seed(master_seed, &[TAG_DATASET, seed_index as u64]),
                ..spec.clone()
            })?),
            DataSource::Fixed(d) => Ok(d.clone()),
        }
    }
}

/// Convergence record for one block fit of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub block: usize,
    pub max_mu_rhat: f64,
    pub min_ess: f64,
    pub accept_rate: f64,
    pub retried: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub context: CellContext,
    pub blocks: Vec<BlockReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    /// Ordered by condition, seed, block, participant, object.
    pub records: Vec<ParticipantRecord>,
    pub cells: Vec<CellReport>,
}

impl GridOutput {
    pub fn n_flagged(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.blocks)
            .filter(|b| b.flagged)
            .count()
    }
}

fn run_cell(
    cell: CellContext,
    dataset: &Dataset,
    config: &ExperimentConfig,
    master_seed: u64,
) -> Result<(Vec<ParticipantRecord>, CellReport), ExperimentError> {
    let cell_seed = derive_seed(master_seed, &[cell.condition.seed_tag(), cell.seed as u64]);
    let posteriors = run_block_learning(&cell.condition, dataset, config, cell_seed)?;
    let mut records = Vec::new();
    let mut blocks = Vec::with_capacity(posteriors.len());
    for posterior in &posteriors {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cell_seed, &[TAG_PARTICIPANTS, posterior.block as u64]));
        records.extend(simulate_participants(
            posterior,
            dataset,
            config.n_participants,
            &cell,
            &mut rng,
        )?);
        blocks.push(BlockReport {
            block: posterior.block,
            max_mu_rhat: posterior.max_mu_rhat,
            min_ess: posterior.diagnostics.min_ess(),
            accept_rate: posterior.draws.mean_accept_rate(),
            retried: posterior.retried,
            flagged: posterior.flagged,
        });
    }
    Ok((records, CellReport { context: cell, blocks }))
}

/// Runs every condition for `n_seeds` replications. Cells run in parallel;
/// all randomness is derived from `master_seed`, the condition and the
/// replication index, so results do not depend on scheduling.
pub fn run_grid(
    conditions: &[Condition],
    data: &DataSource,
    config: &ExperimentConfig,
    n_seeds: usize,
    master_seed: u64,
) -> Result<GridOutput, ExperimentError> {
    if conditions.is_empty() || n_seeds == 0 {
        return Err(ExperimentError::NoConditions);
    }
    let datasets = (0..n_seeds)
        .map(|i| data.dataset(master_seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let cells: Vec<CellContext> = conditions
        .iter()
        .enumerate()
        .flat_map(|(condition_id, &condition)| {
            (0..n_seeds).map(move |seed| CellContext {
                condition_id,
                condition,
                seed,
            })
        })
        .collect();
    let results = cells
        .par_iter()
        .map(|&cell| run_cell(cell, &datasets[cell.seed], config, master_seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    let mut reports = Vec::with_capacity(results.len());
    for (r, report) in results {
        records.extend(r);
        reports.push(report);
    }
    Ok(GridOutput {
        records,
        cells: reports,
    })
}

/// Mean accuracy of one (condition, block) cell, pooled over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub domain_bias: BiasClass,
    pub label_bias: BiasClass,
    pub w: f64,
    pub s: f64,
    pub block: usize,
    pub mean_accuracy: f64,
    /// Standard error across participant means.
    pub se: f64,
    /// Number of participants (seed × participant pairs).
    pub n: usize,
}

type CellKey = (u64, u64, BiasClass, BiasClass, usize);

fn cell_key(r: &ParticipantRecord) -> CellKey {
    // w and s are non-negative, so their bit patterns sort numerically
    (r.w.to_bits(), r.s.to_bits(), r.domain_bias, r.label_bias, r.block)
}

/// Groups records by (domain, label, w, s, block) and reports mean accuracy
/// with its standard error over participants. Rows are ordered by
/// `(w, s, domain, label, block)`.
pub fn summarize(records: &[ParticipantRecord]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    // cell -> participant (seed, index) -> (correct, total)
    let mut cells: BTreeMap<CellKey, BTreeMap<(usize, usize), (usize, usize)>> = BTreeMap::new();
    for r in records {
        let p = cells
            .entry(cell_key(r))
            .or_default()
            .entry((r.seed, r.participant))
            .or_default();
        p.0 += usize::from(r.correct);
        p.1 += 1;
    }
    cells
        .into_iter()
        .map(|((w, s, domain_bias, label_bias, block), participants)| {
            let (hits, total) = participants
                .values()
                .fold((0, 0), |(h, t), (c, n)| (h + c, t + n));
            let means: Vec<f64> = participants.values().map(|(c, n)| *c as f64 / *n as f64).collect();
            let n = means.len();
            let avg = means.iter().sum::<f64>() / n as f64;
            let se = if n > 1 {
                let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                domain_bias,
                label_bias,
                w: f64::from_bits(w),
                s: f64::from_bits(s),
                block,
                mean_accuracy: hits as f64 / total as f64,
                se,
                n,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::unconstrain;
    use nalgebra::DMatrix;

    fn belief(mu: &[f64], sigma: &[f64]) -> LatentState {
        LatentState {
            p: vec![0.5, 0.5],
            k: vec![0.5, 0.5],
            omega: 0.3,
            sigma: DMatrix::from_row_slice(2, 2, sigma),
            mu: DMatrix::from_row_slice(2, 2, mu),
        }
    }

    #[test]
    fn classify_at_category_mean() {
        let b = belief(&[-1.0, 1.0, 0.2, -0.3], &[0.5, 0.5, 0.5, 0.5]);
        let e = Exemplar { features: vec![-1.0, 0.2], category: 0 };
        assert_eq!(classify_exemplar(&e, &b, 1.0), 0);
        let e = Exemplar { features: vec![1.0, -0.3], category: 1 };
        assert_eq!(classify_exemplar(&e, &b, 1.0), 1);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let b = belief(&[0.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 1.0]);
        let e = Exemplar { features: vec![0.4, -0.7], category: 1 };
        assert_eq!(classify_exemplar(&e, &b, 1.0), 0);
    }

    #[test]
    fn classify_matches_brute_force() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sigma: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..2.0)).collect();
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b = belief(&mu, &sigma);
            let term = |xi: f64, m: f64, s: f64| {
                let v = s * s + 1.0;
                -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (xi - m).powi(2) / (2.0 * v)
            };
            let ll0 = term(x[0], mu[0], sigma[0]) + term(x[1], mu[2], sigma[2]);
            let ll1 = term(x[0], mu[1], sigma[1]) + term(x[1], mu[3], sigma[3]);
            let expected = if ll1 > ll0 { 1 } else { 0 };
            let e = Exemplar { features: x, category: 0 };
            assert_eq!(classify_exemplar(&e, &b, 1.0), expected);
        }
    }

    #[test]
    fn grid_shape() {
        let grid = full_grid(&DEFAULT_WEIGHT_SETTINGS);
        assert_eq!(grid.len(), 27);
        assert_eq!(grid[0], Condition::new(BiasClass::Right, BiasClass::Right, 0.2, 0.0));
        assert_eq!(grid[26], Condition::new(BiasClass::Wrong, BiasClass::Wrong, 0.5, 0.0));
    }

    #[test]
    fn seeds_are_distinct() {
        let a = derive_seed(1, &[2, 3]);
        assert_ne!(a, derive_seed(1, &[3, 2]));
        assert_ne!(a, derive_seed(2, &[2, 3]));
        assert_eq!(a, derive_seed(1, &[2, 3]));
    }

    fn record(participant: usize, correct: bool, block: usize) -> ParticipantRecord {
        ParticipantRecord {
            condition_id: 0,
            domain_bias: BiasClass::None,
            label_bias: BiasClass::Right,
            w: 0.3,
            s: 0.03,
            seed: 0,
            block,
            participant,
            object: 0,
            correct,
        }
    }

    #[test]
    fn summarize_degenerate_cases() {
        let all: Vec<_> = (0..10).map(|p| record(p, true, 1)).collect();
        let rows = summarize(&all);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_accuracy, 1.0);
        assert_eq!(rows[0].se, 0.0);
        assert_eq!(rows[0].n, 10);

        let half: Vec<_> = (0..10).map(|p| record(p, p % 2 == 0, 2)).collect();
        assert_eq!(summarize(&half)[0].mean_accuracy, 0.5);
    }

    #[test]
    fn participants_need_enough_draws() {
        let dataset = Dataset::generate(&DatasetSpec::default()).unwrap();
        let cond = Condition::new(BiasClass::None, BiasClass::None, 0.5, 0.0);
        let config = ExperimentConfig {
            n_blocks: 1,
            sampler: SamplerConfig {
                n_chains: 2,
                n_warmup: 50,
                n_samples: 10,
                ..Default::default()
            },
            ..Default::default()
        };
        let post = run_block_learning(&cond, &dataset, &config, 1).unwrap();
        let cell = CellContext { condition_id: 0, condition: cond, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            simulate_participants(&post[0], &dataset, 75, &cell, &mut rng),
            Err(ExperimentError::TooFewDraws { needed: 75, available: 20 })
        ));
        let recs = simulate_participants(&post[0], &dataset, 20, &cell, &mut rng).unwrap();
        assert_eq!(recs.len(), 20 * 16);
    }

    #[test]
    fn oracle_beliefs_score_perfectly() {
        // every participant holds the generating parameters
        let spec = DatasetSpec::default();
        let dataset = Dataset::generate(&spec).unwrap();
        let cond = Condition::new(BiasClass::None, BiasClass::None, 0.5, 0.0);
        let hyper = cond.hyperparams(2, 2, 0, 10.0, 1.0).unwrap();
        let truth = belief(&[-1.0, 1.0, 0.0, 0.0], &[0.25, 0.25, 0.25, 0.25]);
        let truth = LatentState { omega: 0.5, ..truth };
        let z = unconstrain(&truth, &hyper).unwrap();
        let n = 100;
        let draws = PosteriorDraws {
            dim: z.len(),
            n_samples: n,
            chains: (0..2)
                .map(|_| crate::sampler::ChainDraws {
                    draws: z.repeat(n),
                    log_density: vec![0.0; n],
                    warmup_accept_rate: 1.0,
                    accept_rate: 0.0,
                    step_size: 1.0,
                    n_nonfinite: 0,
                    n_divergent: 0,
                })
                .collect(),
        };
        let posterior = BlockPosterior {
            block: 1,
            n_obs: 8,
            hyper: hyper.clone(),
            summary: posterior_summary(&draws, |x| constrain(x, &hyper).unwrap().to_flat()),
            diagnostics: Diagnostics { rhat: vec![1.0; z.len()], ess: vec![1.0; z.len()] },
            draws,
            max_mu_rhat: 1.0,
            retried: false,
            flagged: false,
        };
        let cell = CellContext { condition_id: 0, condition: cond, seed: 0 };
        let recs = simulate_participants(&posterior, &dataset, 75, &cell, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(recs.len(), 1200);
        assert!(recs.iter().all(|r| r.correct));
        for p in 0..75 {
            assert_eq!(recs.iter().filter(|r| r.participant == p).count(), 16);
        }
    }
}
