//! Average treatment effects with machine-scored outcomes.
//!
//! Three estimators of `τ = μ₁ - μ₀` are provided. Only the arm-wise
//! rectifier is unbiased when the mean prediction error differs by arm; the
//! pooled rectifier and naive imputation are kept as baselines whose bias
//! [`theoretical_bias`] gives in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{design_variance, normal_quantile_two_sided};
use crate::study::{mean, sample_variance, PoolKind, StudyData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AteMethod {
    ArmwiseRectifier,
    PooledRectifier,
    NaiveImputation,
}

/// Control (`arm0`) and treated (`arm1`) units, each a nested study.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoArmStudy {
    arm0: StudyData,
    arm1: StudyData,
}

impl TwoArmStudy {
    pub fn new(arm0: StudyData, arm1: StudyData) -> Result<Self> {
        for (z, arm) in [(0, &arm0), (1, &arm1)] {
            if arm.pool_kind() != PoolKind::NestedCensus {
                return Err(Error::InvalidStudy(format!("arm {z} must be a nested pool")));
            }
        }
        Ok(TwoArmStudy { arm0, arm1 })
    }

    pub fn arm(&self, z: usize) -> &StudyData {
        match z {
            0 => &self.arm0,
            _ => &self.arm1,
        }
    }

    pub fn arms(&self) -> [&StudyData; 2] {
        [&self.arm0, &self.arm1]
    }

    /// `f_z = n_z / N_z` per arm.
    pub fn labeling_fractions(&self) -> [f64; 2] {
        [self.arm0.labeled_fraction(), self.arm1.labeled_fraction()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub tau_hat: f64,
    pub method: AteMethod,
    pub per_arm_points: [f64; 2],
    /// Labeled mean residual within each arm.
    pub per_arm_delta_hat: [f64; 2],
    pub variance: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub labeled: [usize; 2],
    pub pool_sizes: [usize; 2],
    /// The variance ignores the method's bias (pooled and naive estimators).
    pub bias_unaccounted: bool,
}

/// Per-arm point estimates `(θ̂₀, θ̂₁)` for `method`.
pub fn arm_points(study: &TwoArmStudy, method: AteMethod) -> Result<[f64; 2]> {
    for (z, arm) in study.arms().into_iter().enumerate() {
        if arm.n() == 0 {
            return Err(Error::no_labels_in(format!("arm {z}")));
        }
    }
    let point = |arm: &StudyData, pooled_rectifier: Option<f64>| -> f64 {
        match method {
            AteMethod::ArmwiseRectifier => arm.pool_prediction_mean() + arm.residuals().mean,
            AteMethod::PooledRectifier => {
                arm.pool_prediction_mean() + pooled_rectifier.expect("pooled rectifier computed")
            }
            AteMethod::NaiveImputation => {
                let f = arm.labeled_fraction();
                let labeled = mean(arm.labeled_outcomes());
                if arm.n() == arm.pool_size() {
                    labeled
                } else {
                    f * labeled + (1.0 - f) * mean(arm.unlabeled_predictions())
                }
            }
        }
    };
    let pooled = (method == AteMethod::PooledRectifier).then(|| {
        mean(
            study
                .arms()
                .into_iter()
                .flat_map(|a| a.labeled_pairs().map(|(y, p)| y - p)),
        )
    });
    Ok([point(&study.arm0, pooled), point(&study.arm1, pooled)])
}

/// ATE estimate with the arm-wise design variance `Σ_z (1 - f_z) S²_{e,z} / n_z`.
pub fn ate_estimate(study: &TwoArmStudy, method: AteMethod, level: f64) -> Result<AteReport> {
    let z_crit = normal_quantile_two_sided(level)?;
    let per_arm_points = arm_points(study, method)?;
    let mut variance = 0.0;
    let mut per_arm_delta_hat = [0.0; 2];
    for (z, arm) in study.arms().into_iter().enumerate() {
        let residuals = arm.residuals();
        if residuals.len() < 2 {
            return Err(Error::DegenerateSample {
                needed: 2,
                found: residuals.len(),
            });
        }
        per_arm_delta_hat[z] = residuals.mean;
        variance += design_variance(sample_variance(&residuals.values), arm.n(), arm.pool_size());
    }
    let tau_hat = per_arm_points[1] - per_arm_points[0];
    let std_error = variance.sqrt();
    Ok(AteReport {
        tau_hat,
        method,
        per_arm_points,
        per_arm_delta_hat,
        variance,
        std_error,
        ci_low: tau_hat - z_crit * std_error,
        ci_high: tau_hat + z_crit * std_error,
        level,
        labeled: [study.arm0.n(), study.arm1.n()],
        pool_sizes: [study.arm0.pool_size(), study.arm1.pool_size()],
        bias_unaccounted: method != AteMethod::ArmwiseRectifier,
    })
}

/// Closed-form bias of `τ̂` given arm mean prediction errors `δ_z` and labeling
/// fractions `f_z`.
pub fn theoretical_bias(method: AteMethod, delta0: f64, delta1: f64, f0: f64, f1: f64) -> Result<f64> {
    for f in [f0, f1] {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidFraction(f));
        }
    }
    Ok(match method {
        AteMethod::ArmwiseRectifier => 0.0,
        AteMethod::PooledRectifier => delta0 - delta1,
        AteMethod::NaiveImputation => (1.0 - f0) * delta0 - (1.0 - f1) * delta1,
    })
}
