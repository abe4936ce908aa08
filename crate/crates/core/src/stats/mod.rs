//! Fixed-effects logistic regression with cluster-robust Wald tests for the
//! simulated participant records.
//!
//! The model is `accuracy ~ (block + label + domain)^2`, fitted by IRLS under
//! an independence working model; inference uses a sandwich covariance with
//! one cluster per object, pooled across replications.

mod design;
mod logistic;

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::experiment::ParticipantRecord;

pub use design::{encode_design, DesignMatrix, Effect, DESIGN_COLUMNS, EFFECTS};
pub use logistic::{chi2_sf, irls_fit, sandwich_cov, wald_group_test, FitResult, WaldTest};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no records to analyse")]
    Empty,
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("perfect separation: coefficients diverged after {iterations} IRLS iterations")]
    Separation { iterations: usize },
    #[error("cluster-robust covariance needs at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("coefficient sub-covariance is singular")]
    SingularCovariance,
    #[error("chi-square degrees of freedom must be >= 1, got {0}")]
    InvalidDf(usize),
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const ANOVA_COLUMNS: [&str; 4] = ["effect", "df", "wald_chi2", "p_value"];

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRow {
    pub effect: &'static str,
    pub df: usize,
    pub wald_chi2: f64,
    pub p_value: f64,
}

/// Full fit for one (w, s) setting.
#[derive(Debug, Clone)]
pub struct SettingAnalysis {
    pub w: f64,
    pub s: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub fit: FitResult,
    pub robust_cov: DMatrix<f64>,
    pub rows: Vec<AnovaRow>,
}

/// Wald tests for the six model terms given coefficients and a covariance.
pub fn effect_tests(beta: &[f64], cov: &DMatrix<f64>) -> Result<Vec<AnovaRow>, StatsError> {
    EFFECTS
        .iter()
        .map(|e| {
            let t = wald_group_test(beta, cov, e.columns)?;
            Ok(AnovaRow {
                effect: e.name,
                df: t.df,
                wald_chi2: t.chi2,
                p_value: t.p_value,
            })
        })
        .collect()
}

/// Fits one setting's records. Records are put in a canonical order first,
/// so the result does not depend on input row order.
pub fn analyze_setting(records: &[ParticipantRecord]) -> Result<SettingAnalysis, StatsError> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| {
        (a.condition_id, a.seed, a.block, a.participant, a.object, a.domain_bias, a.label_bias, a.correct)
            .cmp(&(b.condition_id, b.seed, b.block, b.participant, b.object, b.domain_bias, b.label_bias, b.correct))
            .then(a.w.total_cmp(&b.w))
            .then(a.s.total_cmp(&b.s))
    });
    let design = encode_design(&sorted)?;
    let fit = irls_fit(&design.x, &design.y)?;
    let robust_cov = sandwich_cov(&design.x, &design.y, &fit, &design.clusters)?;
    let rows = effect_tests(&fit.beta, &robust_cov)?;
    Ok(SettingAnalysis {
        w: sorted[0].w,
        s: sorted[0].s,
        n_obs: sorted.len(),
        n_clusters: design.n_clusters,
        fit,
        robust_cov,
        rows,
    })
}

/// Runs [`analyze_setting`] separately for every (w, s) setting present,
/// in ascending (w, s) order.
pub fn analyze(records: &[ParticipantRecord]) -> Result<Vec<SettingAnalysis>, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut groups: BTreeMap<(u64, u64), Vec<ParticipantRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.w.to_bits(), r.s.to_bits())).or_default().push(r.clone());
    }
    let mut out = groups.values().map(|g| analyze_setting(g)).collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.s.total_cmp(&b.s)));
    Ok(out)
}

pub fn write_anova_csv<W: Write>(rows: &[AnovaRow], out: W) -> Result<(), StatsError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(ANOVA_COLUMNS)?;
    for r in rows {
        writer.write_record([
            r.effect.to_string(),
            r.df.to_string(),
            format!("{:?}", r.wald_chi2),
            format!("{:?}", r.p_value),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
