//! Design-based checks on whether the predictions and their errors behave.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::sample_moments;
use crate::study::{mean, sample_variance, StudyData};
use crate::treatment::{ate_estimate, AteMethod, TwoArmStudy};

/// Floor on the pooled variance in two-sample residual comparisons.
pub const POOLED_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticThresholds {
    pub subgroup_z: f64,
    pub exchangeability_ks: f64,
    pub negative_control_z: f64,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        DiagnosticThresholds {
            subgroup_z: 2.0,
            exchangeability_ks: 0.2,
            negative_control_z: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticFlag {
    /// Predictions do not reduce variance relative to the labeled-only mean.
    PredictionsUnhelpful,
    SubgroupResidualDifference,
    LabeledSetNotRepresentative,
    NegativeControlEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub group_id: String,
    pub mean_residual: f64,
    /// `None` with fewer than two residuals.
    pub sd_residual: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupComparison {
    pub group_a: String,
    pub group_b: String,
    /// `mean(b) - mean(a)`.
    pub mean_difference: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTable {
    pub rows: Vec<SubgroupRow>,
    pub comparisons: Vec<SubgroupComparison>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeControl {
    pub tau_hat: f64,
    pub std_error: f64,
    /// `tau_hat / std_error`; `None` when the standard error is zero.
    pub z_score: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub design_effect: f64,
    pub subgroup_residual_table: Option<SubgroupTable>,
    pub exchangeability_stat: f64,
    pub negative_control: Option<NegativeControl>,
    pub flags: Vec<DiagnosticFlag>,
    pub thresholds: DiagnosticThresholds,
}

/// Ratio of the PPI design variance to the labeled-only design variance,
/// `σ̂_e² / σ̂_Y²` (the finite-population corrections cancel).
pub fn design_effect(data: &StudyData) -> Result<f64> {
    let m = sample_moments(data)?;
    if m.var_y <= 0.0 {
        return Err(Error::ZeroOutcomeVariance);
    }
    Ok(m.sigma_e2 / m.var_y)
}

/// Per-group residual summaries plus pairwise two-sample z statistics.
///
/// `groups` has one entry per stored unit; every labeled unit needs a group.
pub fn residual_subgroup_report(
    data: &StudyData,
    groups: &[Option<String>],
    z_threshold: f64,
) -> Result<SubgroupTable> {
    if groups.len() != data.predictions().len() {
        return Err(Error::InvalidStudy(format!(
            "{} group labels for {} units",
            groups.len(),
            data.predictions().len()
        )));
    }
    let mut by_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (i, ((y, p), g)) in data.outcomes().iter().zip(data.predictions()).zip(groups).enumerate() {
        let Some(y) = y else { continue };
        let g = g.as_deref().ok_or(Error::InvalidGrouping { unit: i })?;
        by_group.entry(g).or_default().push(y - p);
    }
    if by_group.is_empty() {
        return Err(Error::no_labels());
    }

    let rows: Vec<SubgroupRow> = by_group
        .iter()
        .map(|(g, r)| SubgroupRow {
            group_id: g.to_string(),
            mean_residual: mean(r.iter().copied()),
            sd_residual: (r.len() >= 2).then(|| sample_variance(r).sqrt()),
            n: r.len(),
        })
        .collect();

    let resid: Vec<&Vec<f64>> = by_group.values().collect();
    let mut comparisons = Vec::new();
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let (ra, rb) = (resid[a], resid[b]);
            let (na, nb) = (ra.len() as f64, rb.len() as f64);
            let ss = |r: &[f64]| {
                if r.len() < 2 {
                    0.0
                } else {
                    sample_variance(r) * (r.len() - 1) as f64
                }
            };
            let dof = na + nb - 2.0;
            let pooled = if dof > 0.0 { (ss(ra) + ss(rb)) / dof } else { 0.0 };
            let pooled = pooled.max(POOLED_VARIANCE_FLOOR);
            let diff = rows[b].mean_residual - rows[a].mean_residual;
            let z = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
            comparisons.push(SubgroupComparison {
                group_a: rows[a].group_id.clone(),
                group_b: rows[b].group_id.clone(),
                mean_difference: diff,
                z,
                flagged: z.abs() > z_threshold,
            });
        }
    }
    Ok(SubgroupTable { rows, comparisons })
}

/// Two-sample Kolmogorov–Smirnov statistic between the labeled predictions and
/// the pool predictions.
pub fn exchangeability_check(data: &StudyData) -> f64 {
    let mut labeled: Vec<f64> = data.labeled_predictions().collect();
    let mut pool: Vec<f64> = data.pool_predictions().collect();
    if labeled.is_empty() || pool.is_empty() {
        return 0.0;
    }
    ks_statistic(&mut labeled, &mut pool)
}

pub(crate) fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Arm-wise ATE on an outcome with no expected effect.
pub fn negative_control_check(study: &TwoArmStudy, z_threshold: f64) -> Result<NegativeControl> {
    negative_control_with(study, AteMethod::ArmwiseRectifier, z_threshold)
}

pub fn negative_control_with(
    study: &TwoArmStudy,
    method: AteMethod,
    z_threshold: f64,
) -> Result<NegativeControl> {
    let r = ate_estimate(study, method, 0.95)?;
    let z_score = (r.std_error > 0.0).then(|| r.tau_hat / r.std_error);
    let flagged = match z_score {
        Some(z) => z.abs() > z_threshold,
        None => r.tau_hat != 0.0,
    };
    Ok(NegativeControl {
        tau_hat: r.tau_hat,
        std_error: r.std_error,
        z_score,
        flagged,
    })
}

/// Runs every applicable check and collects the raised flags.
pub fn diagnose(
    data: &StudyData,
    groups: Option<&[Option<String>]>,
    negative_control_study: Option<&TwoArmStudy>,
    thresholds: DiagnosticThresholds,
) -> Result<DiagnosticReport> {
    let deff = design_effect(data)?;
    let table = groups
        .map(|g| residual_subgroup_report(data, g, thresholds.subgroup_z))
        .transpose()?;
    let ks = exchangeability_check(data);
    let nc = negative_control_study
        .map(|s| negative_control_check(s, thresholds.negative_control_z))
        .transpose()?;

    let mut flags = Vec::new();
    if deff >= 1.0 {
        flags.push(DiagnosticFlag::PredictionsUnhelpful);
    }
    if table.as_ref().is_some_and(|t| t.comparisons.iter().any(|c| c.flagged)) {
        flags.push(DiagnosticFlag::SubgroupResidualDifference);
    }
    if ks > thresholds.exchangeability_ks {
        flags.push(DiagnosticFlag::LabeledSetNotRepresentative);
    }
    if nc.is_some_and(|c| c.flagged) {
        flags.push(DiagnosticFlag::NegativeControlEffect);
    }
    Ok(DiagnosticReport {
        design_effect: deff,
        subgroup_residual_table: table,
        exchangeability_stat: ks,
        negative_control: nc,
        flags,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const D1_Y: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
    const D1_P: [f64; 4] = [2.0, 1.0, 4.0, 3.0];

    #[test]
    fn design_effect_cases() {
        let full = StudyData::from_population(&D1_Y, &D1_P, &[0, 1, 2, 3]).unwrap();
        assert!((design_effect(&full).unwrap() - 0.8).abs() < 1e-12);

        let perfect = StudyData::from_population(&D1_Y, &D1_Y, &[0, 2, 3]).unwrap();
        assert_eq!(design_effect(&perfect).unwrap(), 0.0);

        let constant = StudyData::from_population(&D1_Y, &[2.5; 4], &[0, 1, 3]).unwrap();
        assert!((design_effect(&constant).unwrap() - 1.0).abs() < 1e-12);

        let flat = StudyData::from_population(&[3.0; 4], &D1_P, &[0, 1]).unwrap();
        assert!(matches!(design_effect(&flat), Err(Error::ZeroOutcomeVariance)));
    }

    #[test]
    fn ks_examples() {
        let d1 = StudyData::from_population(&D1_Y, &D1_P, &[0, 1]).unwrap();
        assert_eq!(exchangeability_check(&d1), 0.5);
        let full = StudyData::from_population(&D1_Y, &D1_P, &[0, 1, 2, 3]).unwrap();
        assert_eq!(exchangeability_check(&full), 0.0);
        // Labeled units sit below every unlabeled prediction.
        let preds: Vec<f64> = (0..100).map(f64::from).collect();
        let ys = preds.clone();
        let low = StudyData::from_population(&ys, &preds, &[0, 1]).unwrap();
        assert!((exchangeability_check(&low) - 0.98).abs() < 1e-12);
    }

    #[test]
    fn subgroup_difference_is_flagged() {
        // Residuals [-1, -1] in A and [1, 1] in B.
        let d = StudyData::from_population(&[0.0, 1.0, 3.0, 4.0], &[1.0, 2.0, 2.0, 3.0], &[0, 1, 2, 3])
            .unwrap();
        let groups: Vec<Option<String>> = ["A", "A", "B", "B"].iter().map(|s| Some(s.to_string())).collect();
        let t = residual_subgroup_report(&d, &groups, 2.0).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].sd_residual, Some(0.0));
        assert_eq!(t.comparisons[0].mean_difference, 2.0);
        assert!(t.comparisons[0].flagged);
    }

    #[test]
    fn identical_groups_and_single_group() {
        let d = StudyData::from_population(&[0.0, 1.0, 0.0, 1.0], &[0.5, 0.5, 0.5, 0.5], &[0, 1, 2, 3])
            .unwrap();
        let groups: Vec<Option<String>> = ["A", "A", "B", "B"].iter().map(|s| Some(s.to_string())).collect();
        let t = residual_subgroup_report(&d, &groups, 2.0).unwrap();
        assert_eq!(t.comparisons[0].mean_difference, 0.0);
        assert!(!t.comparisons[0].flagged);

        let one = vec![Some("all".to_string()); 4];
        let t = residual_subgroup_report(&d, &one, 2.0).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.comparisons.is_empty());
    }

    #[test]
    fn ungrouped_labeled_unit() {
        let d = StudyData::from_population(&D1_Y, &D1_P, &[0, 1]).unwrap();
        let groups = vec![Some("a".to_string()), None, None, None];
        assert!(matches!(
            residual_subgroup_report(&d, &groups, 2.0),
            Err(Error::InvalidGrouping { unit: 1 })
        ));
        // Unlabeled units may be ungrouped.
        let groups = vec![Some("a".to_string()), Some("b".to_string()), None, None];
        assert!(residual_subgroup_report(&d, &groups, 2.0).is_ok());
    }

    #[test]
    fn negative_control_identical_arms() {
        let arm = StudyData::from_population(&[1.0, 2.0, 4.0], &[1.5, 2.0, 3.0], &[0, 1, 2]).unwrap();
        let s = TwoArmStudy::new(arm.clone(), arm).unwrap();
        let nc = negative_control_check(&s, 2.0).unwrap();
        assert_eq!(nc.tau_hat, 0.0);
        assert_eq!(nc.z_score, None);
        assert!(!nc.flagged);
    }

    #[test]
    fn diagnose_collects_flags() {
        let d = StudyData::from_population(&D1_Y, &D1_P, &[0, 1]).unwrap();
        let r = diagnose(&d, None, None, DiagnosticThresholds::default()).unwrap();
        // Labeled sample: σ̂_e² = 2, σ̂_Y² = 0.5.
        assert_eq!(r.design_effect, 4.0);
        assert_eq!(
            r.flags,
            vec![DiagnosticFlag::PredictionsUnhelpful, DiagnosticFlag::LabeledSetNotRepresentative]
        );
    }
}
