use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::StatsError;
use crate::experiment::ParticipantRecord;
use crate::model::BiasClass;

/// Column names in design order. Bias factors are treatment-coded against
/// `none`; block is numeric and centred at its mean over the records.
pub const DESIGN_COLUMNS: [&str; 14] = [
    "intercept",
    "block",
    "label[right]",
    "label[wrong]",
    "domain[right]",
    "domain[wrong]",
    "block:label[right]",
    "block:label[wrong]",
    "block:domain[right]",
    "block:domain[wrong]",
    "label[right]:domain[right]",
    "label[right]:domain[wrong]",
    "label[wrong]:domain[right]",
    "label[wrong]:domain[wrong]",
];

/// A tested model term and the design columns it owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Effect {
    pub name: &'static str,
    pub columns: &'static [usize],
}

/// The six terms of `(block + label + domain)^2`, excluding the intercept.
pub const EFFECTS: [Effect; 6] = [
    Effect { name: "Block", columns: &[1] },
    Effect { name: "Label Bias", columns: &[2, 3] },
    Effect { name: "Domain Bias", columns: &[4, 5] },
    Effect { name: "block:Label", columns: &[6, 7] },
    Effect { name: "block:Domain", columns: &[8, 9] },
    Effect { name: "Label:Domain", columns: &[10, 11, 12, 13] },
];

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// `n x 14`, columns as in [`DESIGN_COLUMNS`].
    pub x: DMatrix<f64>,
    /// 1.0 for a correct answer, 0.0 otherwise.
    pub y: Vec<f64>,
    /// Cluster index per row: one cluster per object.
    pub clusters: Vec<usize>,
    pub n_clusters: usize,
    /// Mean block subtracted from the block column.
    pub block_center: f64,
}

fn dummies(b: BiasClass) -> [f64; 2] {
    match b {
        BiasClass::Right => [1.0, 0.0],
        BiasClass::None => [0.0, 0.0],
        BiasClass::Wrong => [0.0, 1.0],
    }
}

fn require_levels<I: Iterator<Item = BiasClass>>(factor: &'static str, values: I) -> Result<(), StatsError> {
    let mut seen = [false; 3];
    for v in values {
        seen[v as usize] = true;
    }
    let n = seen.iter().filter(|s| **s).count();
    if n < 3 {
        return Err(StatsError::RankDeficient(format!(
            "factor `{factor}` takes {n} of its 3 levels"
        )));
    }
    Ok(())
}

/// Encodes `accuracy ~ (block + label + domain)^2` for the records.
///
/// Every bias factor must take all three levels and block at least two
/// distinct values; otherwise the design is rank-deficient and the error
/// names the offending factor.
pub fn encode_design(records: &[ParticipantRecord]) -> Result<DesignMatrix, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    require_levels("label", records.iter().map(|r| r.label_bias))?;
    require_levels("domain", records.iter().map(|r| r.domain_bias))?;
    let first_block = records[0].block;
    if records.iter().all(|r| r.block == first_block) {
        return Err(StatsError::RankDeficient("factor `block` takes a single value".into()));
    }

    let n = records.len();
    let block_center = records.iter().map(|r| r.block as f64).sum::<f64>() / n as f64;
    let mut cluster_ids = BTreeMap::new();
    let mut clusters = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, DESIGN_COLUMNS.len());
    let mut y = Vec::with_capacity(n);
    for (row, r) in records.iter().enumerate() {
        let next = cluster_ids.len();
        clusters.push(*cluster_ids.entry(r.object).or_insert(next));
        y.push(if r.correct { 1.0 } else { 0.0 });

        let b = r.block as f64 - block_center;
        let l = dummies(r.label_bias);
        let d = dummies(r.domain_bias);
        let values = [
            1.0,
            b,
            l[0],
            l[1],
            d[0],
            d[1],
            b * l[0],
            b * l[1],
            b * d[0],
            b * d[1],
            l[0] * d[0],
            l[0] * d[1],
            l[1] * d[0],
            l[1] * d[1],
        ];
        for (col, v) in values.into_iter().enumerate() {
            x[(row, col)] = v;
        }
    }
    Ok(DesignMatrix {
        x,
        y,
        n_clusters: cluster_ids.len(),
        clusters,
        block_center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_records() -> Vec<ParticipantRecord> {
        let mut out = Vec::new();
        for (ci, (d, l)) in BiasClass::ALL
            .into_iter()
            .flat_map(|d| BiasClass::ALL.into_iter().map(move |l| (d, l)))
            .enumerate()
        {
            for block in 1..=4 {
                for object in 0..16 {
                    out.push(ParticipantRecord {
                        condition_id: ci,
                        domain_bias: d,
                        label_bias: l,
                        w: 0.5,
                        s: 0.0,
                        seed: 0,
                        block,
                        participant: 0,
                        object,
                        correct: (object + block) % 3 != 0,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn column_layout() {
        let design = encode_design(&grid_records()).unwrap();
        assert_eq!(design.x.ncols(), 14);
        assert_eq!(design.x.nrows(), 9 * 4 * 16);
        assert_eq!(design.block_center, 2.5);
        assert_eq!(design.n_clusters, 16);
        // none/none rows carry no dummy mass
        let r = grid_records();
        let row = r
            .iter()
            .position(|x| x.label_bias == BiasClass::None && x.domain_bias == BiasClass::None)
            .unwrap();
        assert_eq!(design.x.row(row).iter().skip(2).filter(|v| **v != 0.0 && (**v).abs() != 1.5 && (**v).abs() != 0.5).count(), 0);
        assert!(design.x.row(row).iter().skip(2).all(|v| *v == 0.0));
    }

    #[test]
    fn full_rank_on_grid() {
        let design = encode_design(&grid_records()).unwrap();
        let sv = design.x.clone().svd(false, false).singular_values;
        let max = sv.max();
        assert_eq!(sv.iter().filter(|s| **s > 1e-10 * max).count(), 14);
    }

    #[test]
    fn degenerate_factors_are_named() {
        let mut r = grid_records();
        r.iter_mut().for_each(|x| x.label_bias = BiasClass::Right);
        assert!(encode_design(&r).unwrap_err().to_string().contains("`label`"));
        let mut r = grid_records();
        r.retain(|x| x.domain_bias != BiasClass::Wrong);
        assert!(encode_design(&r).unwrap_err().to_string().contains("`domain`"));
        let mut r = grid_records();
        r.iter_mut().for_each(|x| x.block = 2);
        assert!(encode_design(&r).unwrap_err().to_string().contains("`block`"));
    }

    #[test]
    fn effects_partition_non_intercept_columns() {
        let mut cols: Vec<usize> = EFFECTS.iter().flat_map(|e| e.columns.iter().copied()).collect();
        cols.sort_unstable();
        assert_eq!(cols, (1..14).collect::<Vec<_>>());
    }
}
