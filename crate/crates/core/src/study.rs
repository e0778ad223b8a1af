//! The joint frame of predictions and gold-standard labels.
//!
//! A [`StudyData`] holds a prediction for every unit of the pool together with
//! true outcomes for the labeled subset. Two layouts are supported:
//!
//! * [`PoolKind::NestedCensus`]: the labeled units are a subsample of the pool.
//!   `outcomes[i]` is present exactly when `labeled_mask[i]` is set, and every
//!   entry belongs to the pool.
//! * [`PoolKind::IndependentSample`]: the labeled pairs were drawn separately.
//!   They are stored as a block appended after the pool entries and
//!   `labeled_mask` marks exactly that block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    #[serde(alias = "nested")]
    NestedCensus,
    #[serde(alias = "independent")]
    IndependentSample,
}

impl PoolKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoolKind::NestedCensus => "nested",
            PoolKind::IndependentSample => "independent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyData {
    predictions: Vec<f64>,
    outcomes: Vec<Option<f64>>,
    labeled_mask: Vec<bool>,
    pool_kind: PoolKind,
}

impl StudyData {
    pub fn new(
        predictions: Vec<f64>,
        outcomes: Vec<Option<f64>>,
        labeled_mask: Vec<bool>,
        pool_kind: PoolKind,
    ) -> Result<Self> {
        let len = predictions.len();
        if outcomes.len() != len || labeled_mask.len() != len {
            return Err(Error::InvalidStudy(format!(
                "length mismatch: {} predictions, {} outcomes, {} mask entries",
                len,
                outcomes.len(),
                labeled_mask.len()
            )));
        }
        if let Some(i) = predictions.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidStudy(format!("prediction {i} is not finite")));
        }
        for (i, (y, &labeled)) in outcomes.iter().zip(&labeled_mask).enumerate() {
            match (y, labeled) {
                (Some(v), true) if !v.is_finite() => {
                    return Err(Error::InvalidStudy(format!("outcome {i} is not finite")))
                }
                (None, true) => {
                    return Err(Error::InvalidStudy(format!(
                        "unit {i} is labeled but has no outcome"
                    )))
                }
                (Some(_), false) => {
                    return Err(Error::InvalidStudy(format!(
                        "unit {i} has an outcome but is not labeled"
                    )))
                }
                _ => {}
            }
        }
        if pool_kind == PoolKind::IndependentSample {
            // The labeled block must be a contiguous suffix.
            if let Some(first) = labeled_mask.iter().position(|&m| m) {
                if labeled_mask[first..].iter().any(|&m| !m) {
                    return Err(Error::InvalidStudy(
                        "independent labeled pairs must form a trailing block".into(),
                    ));
                }
            }
        }
        let data = StudyData {
            predictions,
            outcomes,
            labeled_mask,
            pool_kind,
        };
        if data.pool_size() == 0 {
            return Err(Error::InvalidStudy("the prediction pool is empty".into()));
        }
        if data.n() > data.pool_size() {
            return Err(Error::InvalidStudy(format!(
                "{} labeled units exceed the pool size {}",
                data.n(),
                data.pool_size()
            )));
        }
        Ok(data)
    }

    /// Labeled set nested in the pool; a unit is labeled iff its outcome is present.
    pub fn nested(predictions: Vec<f64>, outcomes: Vec<Option<f64>>) -> Result<Self> {
        let mask = outcomes.iter().map(Option::is_some).collect();
        Self::new(predictions, outcomes, mask, PoolKind::NestedCensus)
    }

    /// Fully known population with the units at `labeled` revealed.
    pub fn from_population(outcomes: &[f64], predictions: &[f64], labeled: &[usize]) -> Result<Self> {
        if outcomes.len() != predictions.len() {
            return Err(Error::InvalidStudy(
                "population outcome and prediction lengths differ".into(),
            ));
        }
        let mut ys = vec![None; outcomes.len()];
        for &i in labeled {
            let slot = ys
                .get_mut(i)
                .ok_or_else(|| Error::InvalidStudy(format!("labeled index {i} out of range")))?;
            *slot = Some(outcomes[i]);
        }
        Self::nested(predictions.to_vec(), ys)
    }

    /// Pool predictions plus a disjoint block of `(outcome, prediction)` pairs.
    pub fn independent(pool_predictions: Vec<f64>, labeled: Vec<(f64, f64)>) -> Result<Self> {
        let pool = pool_predictions.len();
        let mut predictions = pool_predictions;
        let mut outcomes = vec![None; pool];
        let mut mask = vec![false; pool];
        for (y, yhat) in labeled {
            predictions.push(yhat);
            outcomes.push(Some(y));
            mask.push(true);
        }
        Self::new(predictions, outcomes, mask, PoolKind::IndependentSample)
    }

    pub fn pool_kind(&self) -> PoolKind {
        self.pool_kind
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn outcomes(&self) -> &[Option<f64>] {
        &self.outcomes
    }

    pub fn labeled_mask(&self) -> &[bool] {
        &self.labeled_mask
    }

    /// Number of labeled units.
    pub fn n(&self) -> usize {
        self.labeled_mask.iter().filter(|&&m| m).count()
    }

    /// Number of units in the prediction pool.
    pub fn pool_size(&self) -> usize {
        match self.pool_kind {
            PoolKind::NestedCensus => self.predictions.len(),
            PoolKind::IndependentSample => self.predictions.len() - self.n(),
        }
    }

    pub fn labeled_fraction(&self) -> f64 {
        self.n() as f64 / self.pool_size() as f64
    }

    pub fn pool_predictions(&self) -> impl Iterator<Item = f64> + '_ {
        let nested = self.pool_kind == PoolKind::NestedCensus;
        self.predictions
            .iter()
            .zip(&self.labeled_mask)
            .filter(move |(_, &m)| nested || !m)
            .map(|(&p, _)| p)
    }

    /// Pool units without a label.
    pub fn unlabeled_predictions(&self) -> impl Iterator<Item = f64> + '_ {
        self.predictions
            .iter()
            .zip(&self.labeled_mask)
            .filter(|(_, &m)| !m)
            .map(|(&p, _)| p)
    }

    /// `(outcome, prediction)` for every labeled unit, in storage order.
    pub fn labeled_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.outcomes
            .iter()
            .zip(&self.predictions)
            .filter_map(|(y, &p)| y.map(|y| (y, p)))
    }

    pub fn labeled_outcomes(&self) -> impl Iterator<Item = f64> + '_ {
        self.labeled_pairs().map(|(y, _)| y)
    }

    pub fn labeled_predictions(&self) -> impl Iterator<Item = f64> + '_ {
        self.labeled_pairs().map(|(_, p)| p)
    }

    pub fn pool_prediction_mean(&self) -> f64 {
        mean(self.pool_predictions())
    }

    pub fn residuals(&self) -> Residuals {
        Residuals::new(self.labeled_pairs().map(|(y, p)| y - p).collect())
    }
}

/// Prediction errors `Y - Ŷ` over the labeled units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Divisor n - 1; NaN when fewer than two residuals.
    pub sample_variance: f64,
}

impl Residuals {
    pub fn new(values: Vec<f64>) -> Self {
        let mean = mean(values.iter().copied());
        let sample_variance = sample_variance(&values);
        Residuals {
            values,
            mean,
            sample_variance,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

/// Two-pass unbiased variance; NaN for fewer than two values.
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    sample_covariance(values, values)
}

pub(crate) fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mx = mean(xs.iter().copied());
    let my = mean(ys.iter().copied());
    let s: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    s / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d1() -> StudyData {
        StudyData::from_population(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0], &[0, 1]).unwrap()
    }

    #[test]
    fn nested_counts() {
        let d = d1();
        assert_eq!(d.n(), 2);
        assert_eq!(d.pool_size(), 4);
        assert_eq!(d.pool_prediction_mean(), 2.5);
        assert_eq!(d.unlabeled_predictions().collect::<Vec<_>>(), vec![4.0, 3.0]);
    }

    #[test]
    fn residuals_are_exact_differences() {
        let r = d1().residuals();
        assert_eq!(r.values, vec![-1.0, 1.0]);
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.sample_variance, 2.0);
    }

    #[test]
    fn independent_layout_appends_labeled_block() {
        let d = StudyData::independent(vec![1.0, 2.0, 3.0], vec![(5.0, 4.0)]).unwrap();
        assert_eq!(d.pool_size(), 3);
        assert_eq!(d.n(), 1);
        assert_eq!(d.pool_prediction_mean(), 2.0);
        assert_eq!(d.labeled_mask(), &[false, false, false, true]);
        assert_eq!(d.unlabeled_predictions().count(), 3);
    }

    #[test]
    fn rejects_interleaved_independent_block() {
        let err = StudyData::new(
            vec![1.0, 2.0, 3.0],
            vec![None, Some(1.0), None],
            vec![false, true, false],
            PoolKind::IndependentSample,
        );
        assert!(matches!(err, Err(Error::InvalidStudy(_))));
    }

    #[test]
    fn rejects_non_finite_and_mask_mismatch() {
        assert!(StudyData::nested(vec![f64::NAN], vec![None]).is_err());
        assert!(StudyData::nested(vec![1.0], vec![Some(f64::INFINITY)]).is_err());
        assert!(StudyData::new(vec![1.0], vec![Some(1.0)], vec![false], PoolKind::NestedCensus).is_err());
        assert!(StudyData::new(vec![1.0], vec![None], vec![true], PoolKind::NestedCensus).is_err());
        assert!(StudyData::nested(vec![], vec![]).is_err());
    }

    #[test]
    fn independent_labeled_cannot_exceed_pool() {
        let err = StudyData::independent(vec![1.0], vec![(1.0, 1.0), (2.0, 2.0)]);
        assert!(err.is_err());
    }
}
