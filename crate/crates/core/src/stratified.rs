//! Stratified difference estimation and Neyman allocation of a labeling budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    confidence_interval, design_variance, ppi_point, EstimateReport, Method, VarianceMode,
};
use crate::study::{PoolKind, StudyData};

pub const DEFAULT_MIN_PER_STRATUM: usize = 2;
pub const DEFAULT_QUANTILE_BINS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub id: String,
    pub data: StudyData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedStudy {
    strata: Vec<Stratum>,
}

impl StratifiedStudy {
    pub fn new(strata: Vec<Stratum>) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::InvalidStudy("no strata".into()));
        }
        for (i, s) in strata.iter().enumerate() {
            if s.data.pool_kind() != PoolKind::NestedCensus {
                return Err(Error::InvalidStudy(format!("stratum {} must be a nested pool", s.id)));
            }
            if strata[..i].iter().any(|o| o.id == s.id) {
                return Err(Error::InvalidStudy(format!("duplicate stratum id {}", s.id)));
            }
        }
        Ok(StratifiedStudy { strata })
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn pool_size(&self) -> usize {
        self.strata.iter().map(|s| s.data.pool_size()).sum()
    }

    /// `W_h = N_h / N`.
    pub fn weights(&self) -> Vec<f64> {
        let total = self.pool_size() as f64;
        self.strata
            .iter()
            .map(|s| s.data.pool_size() as f64 / total)
            .collect()
    }
}

/// Splits a nested study into `bins` equal-frequency strata by predicted value.
///
/// Units are ordered by prediction (ties by position); bin sizes differ by at
/// most one. Strata are named `q1`, `q2`, ...
pub fn quantile_strata(data: &StudyData, bins: usize) -> Result<StratifiedStudy> {
    if data.pool_kind() != PoolKind::NestedCensus {
        return Err(Error::InvalidStudy("quantile strata need a nested pool".into()));
    }
    let len = data.predictions().len();
    if bins == 0 || bins > len {
        return Err(Error::InvalidStudy(format!(
            "cannot form {bins} strata from {len} units"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| data.predictions()[a].total_cmp(&data.predictions()[b]).then(a.cmp(&b)));
    let mut strata = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let end = (b + 1) * len / bins;
        let idx = &order[start..end];
        let preds = idx.iter().map(|&i| data.predictions()[i]).collect();
        let ys = idx.iter().map(|&i| data.outcomes()[i]).collect();
        strata.push(Stratum {
            id: format!("q{}", b + 1),
            data: StudyData::nested(preds, ys)?,
        });
        start = end;
    }
    StratifiedStudy::new(strata)
}

/// `Σ_h W_h θ̂_h` with design variance `Σ_h W_h² (1 - f_h) S²_{e,h} / n_h`.
///
/// Within-stratum sample sizes are treated as fixed.
pub fn stratified_ppi_mean(study: &StratifiedStudy, level: f64) -> Result<EstimateReport> {
    let weights = study.weights();
    let mut point = 0.0;
    let mut variance = 0.0;
    for (s, w) in study.strata.iter().zip(&weights) {
        let n = s.data.n();
        if n == 0 {
            return Err(Error::no_labels_in(format!("stratum {}", s.id)));
        }
        if n < 2 {
            return Err(Error::DegenerateSample { needed: 2, found: n });
        }
        point += w * ppi_point(&s.data)?;
        let resid = s.data.residuals();
        variance += w * w * design_variance(resid.sample_variance, n, s.data.pool_size());
    }
    let (ci_low, ci_high) = confidence_interval(point, variance, level)?;
    Ok(EstimateReport {
        point,
        variance,
        std_error: variance.sqrt(),
        ci_low,
        ci_high,
        level,
        method: Method::Ppi,
        variance_mode: VarianceMode::DesignSrswor,
        lambda: Some(1.0),
        n: study.strata.iter().map(|s| s.data.n()).sum(),
        pool_size: study.pool_size(),
        variance_clamped: false,
        notes: vec![
            "variance plugs in labeled-sample moments; the population residual variance S_e^2 is replaced by its sample estimate".into(),
            "within-stratum sample sizes treated as fixed".into(),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub allocations: Vec<usize>,
    pub pool_sizes: Vec<usize>,
    pub dispersions: Vec<f64>,
    pub budget: usize,
    pub min_per_stratum: usize,
    /// All dispersions were zero, so the budget was split proportionally to N_h.
    pub proportional_fallback: bool,
}

impl AllocationPlan {
    pub fn objective(&self) -> f64 {
        allocation_variance(&self.pool_sizes, &self.dispersions, &self.allocations)
    }
}

/// `Σ_h W_h² (1 - n_h/N_h) s_h² / n_h`, the stratified design variance of an allocation.
pub fn allocation_variance(pool_sizes: &[usize], dispersions: &[f64], allocations: &[usize]) -> f64 {
    let total: usize = pool_sizes.iter().sum();
    pool_sizes
        .iter()
        .zip(dispersions)
        .zip(allocations)
        .map(|((&big_n, &s), &n)| {
            let w = big_n as f64 / total as f64;
            w * w * design_variance(s * s, n, big_n)
        })
        .sum()
}

/// Splits `budget` labels across strata with `n_h ∝ N_h s_h`.
///
/// The proportional shares are first projected onto the bounds
/// `min_per_stratum ≤ n_h ≤ N_h` (strata hitting a bound are fixed there and
/// the rest rescaled), then rounded by largest remainder so the total is
/// exactly `budget`.
pub fn neyman_allocation(
    dispersions: &[(usize, f64)],
    budget: usize,
    min_per_stratum: usize,
) -> Result<AllocationPlan> {
    if dispersions.is_empty() {
        return Err(Error::InvalidStudy("no strata to allocate".into()));
    }
    if let Some(&(_, s)) = dispersions.iter().find(|(_, s)| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidStudy(format!("dispersion must be finite and nonnegative, got {s}")));
    }
    let pool_sizes: Vec<usize> = dispersions.iter().map(|&(n, _)| n).collect();
    let minimum = min_per_stratum * dispersions.len();
    let maximum: usize = pool_sizes.iter().sum();
    if budget < minimum || budget > maximum || pool_sizes.iter().any(|&n| n < min_per_stratum) {
        return Err(Error::InfeasibleBudget {
            budget,
            minimum,
            maximum,
        });
    }

    let mut scores: Vec<f64> = dispersions.iter().map(|&(n, s)| n as f64 * s).collect();
    let proportional_fallback = scores.iter().all(|&a| a == 0.0);
    if proportional_fallback {
        log::info!("all stratum dispersions are zero; using proportional allocation");
        scores = pool_sizes.iter().map(|&n| n as f64).collect();
    }
    let lower = vec![min_per_stratum as f64; scores.len()];
    let upper: Vec<f64> = pool_sizes.iter().map(|&n| n as f64).collect();
    let shares = bounded_proportional(&scores, &lower, &upper, budget as f64);
    let allocations = largest_remainder(&shares, &pool_sizes, budget);

    Ok(AllocationPlan {
        allocations,
        pool_sizes,
        dispersions: dispersions.iter().map(|&(_, s)| s).collect(),
        budget,
        min_per_stratum,
        proportional_fallback,
    })
}

/// Continuous `x_h = clamp(t a_h, lo_h, hi_h)` with `t` chosen so `Σ x_h = total`.
///
/// This is the optimum of `Σ a_h² / x_h` under the bounds. Zero-score strata
/// stay at their lower bound unless the positive-score strata are saturated.
fn bounded_proportional(scores: &[f64], lower: &[f64], upper: &[f64], total: f64) -> Vec<f64> {
    let fill = |t: f64| -> Vec<f64> {
        scores
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(&a, (&lo, &hi))| (a * t).clamp(lo, hi))
            .collect()
    };
    let sum = |x: &[f64]| x.iter().sum::<f64>();

    let t_max = scores
        .iter()
        .zip(upper)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &hi)| hi / a)
        .fold(0.0, f64::max);
    let saturated = fill(t_max);
    if sum(&saturated) <= total {
        // Spread what is left over the zero-score strata by spare capacity.
        let mut x = saturated;
        let spare: f64 = (0..x.len()).filter(|&h| scores[h] == 0.0).map(|h| upper[h] - x[h]).sum();
        let left = total - sum(&x);
        if spare > 0.0 {
            for h in (0..x.len()).filter(|&h| scores[h] == 0.0) {
                x[h] += left * (upper[h] - x[h]) / spare;
            }
        }
        return x;
    }

    let (mut lo_t, mut hi_t) = (0.0, t_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo_t + hi_t);
        if sum(&fill(mid)) < total {
            lo_t = mid;
        } else {
            hi_t = mid;
        }
    }
    // Re-solve t exactly on the active set found by bisection.
    let x = fill(hi_t);
    let free: Vec<usize> = (0..x.len())
        .filter(|&h| scores[h] > 0.0 && x[h] > lower[h] && x[h] < upper[h])
        .collect();
    let free_score: f64 = free.iter().map(|&h| scores[h]).sum();
    if free_score == 0.0 {
        return x;
    }
    let bound_total: f64 = (0..x.len()).filter(|h| !free.contains(h)).map(|h| x[h]).sum();
    let t = (total - bound_total) / free_score;
    let mut out = x;
    for &h in &free {
        out[h] = (scores[h] * t).clamp(lower[h], upper[h]);
    }
    out
}

fn largest_remainder(shares: &[f64], caps: &[usize], budget: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = shares
        .iter()
        .zip(caps)
        .map(|(&x, &cap)| (x.floor() as usize).min(cap))
        .collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = budget.saturating_sub(assigned);
    // Floating error can leave more units than positive remainders; keep cycling.
    while left > 0 {
        let mut progressed = false;
        for &h in &order {
            if left == 0 {
                break;
            }
            if alloc[h] < caps[h] {
                alloc[h] += 1;
                left -= 1;
                progressed = true;
            }
        }
        assert!(progressed, "budget exceeds total capacity");
    }
    let mut excess = alloc.iter().sum::<usize>().saturating_sub(budget);
    for &h in order.iter().rev() {
        if excess == 0 {
            break;
        }
        if alloc[h] > 0 {
            alloc[h] -= 1;
            excess -= 1;
        }
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d1_stratum(id: &str) -> Stratum {
        Stratum {
            id: id.into(),
            data: StudyData::from_population(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0], &[0, 1])
                .unwrap(),
        }
    }

    #[test]
    fn neyman_examples() {
        let p = neyman_allocation(&[(100, 1.0), (100, 3.0)], 40, 2).unwrap();
        assert_eq!(p.allocations, vec![10, 30]);
        let p = neyman_allocation(&[(50, 2.0), (50, 2.0), (50, 2.0)], 30, 2).unwrap();
        assert_eq!(p.allocations, vec![10, 10, 10]);
        let p = neyman_allocation(&[(100, 0.0), (100, 1.0)], 10, 2).unwrap();
        assert_eq!(p.allocations, vec![2, 8]);
        assert!(!p.proportional_fallback);
    }

    #[test]
    fn zero_dispersion_falls_back_to_proportional() {
        let p = neyman_allocation(&[(100, 0.0), (300, 0.0)], 20, 2).unwrap();
        assert!(p.proportional_fallback);
        assert_eq!(p.allocations, vec![5, 15]);
    }

    #[test]
    fn caps_at_stratum_size() {
        let p = neyman_allocation(&[(5, 10.0), (100, 1.0)], 30, 2).unwrap();
        assert_eq!(p.allocations, vec![5, 25]);
    }

    #[test]
    fn infeasible_budgets() {
        assert!(matches!(
            neyman_allocation(&[(10, 1.0), (10, 1.0)], 3, 2),
            Err(Error::InfeasibleBudget { .. })
        ));
        assert!(matches!(
            neyman_allocation(&[(10, 1.0), (10, 1.0)], 21, 2),
            Err(Error::InfeasibleBudget { .. })
        ));
        assert!(neyman_allocation(&[(1, 1.0), (10, 1.0)], 5, 2).is_err());
    }

    #[test]
    fn allocation_sums_to_budget_with_remainders() {
        let p = neyman_allocation(&[(97, 1.3), (41, 0.7), (13, 2.9)], 37, 2).unwrap();
        assert_eq!(p.allocations.iter().sum::<usize>(), 37);
        assert!(p.allocations.iter().zip(&p.pool_sizes).all(|(&n, &cap)| n >= 2 && n <= cap));
    }

    #[test]
    fn two_identical_d1_strata() {
        let s = StratifiedStudy::new(vec![d1_stratum("a"), d1_stratum("b")]).unwrap();
        let r = stratified_ppi_mean(&s, 0.95).unwrap();
        assert_eq!(r.point, 2.5);
        // Plug-in S_e^2 = 2 per stratum: 2 * 0.25 * 0.5.
        assert_eq!(r.variance, 0.25);
        // With the population S_e^2 = 4/3 the composition is 2 * 0.25 * 1/3 = 1/6.
        let w = s.weights();
        let oracle: f64 = w.iter().map(|w| w * w * design_variance(4.0 / 3.0, 2, 4)).sum();
        assert!((oracle - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_stratum_matches_ppi() {
        let s = StratifiedStudy::new(vec![d1_stratum("only")]).unwrap();
        let r = stratified_ppi_mean(&s, 0.95).unwrap();
        let d = &s.strata()[0].data;
        assert_eq!(r.point, ppi_point(d).unwrap());
        assert_eq!(r.variance, 0.5);
    }

    #[test]
    fn stratum_without_labels() {
        let empty = Stratum {
            id: "empty".into(),
            data: StudyData::nested(vec![1.0, 2.0], vec![None, None]).unwrap(),
        };
        let s = StratifiedStudy::new(vec![d1_stratum("a"), empty]).unwrap();
        match stratified_ppi_mean(&s, 0.95) {
            Err(Error::NoLabels { context: Some(c) }) => assert!(c.contains("empty")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quantile_bins_partition_by_prediction() {
        let preds = vec![5.0, 1.0, 3.0, 2.0, 4.0, 0.0, 7.0];
        let ys = preds.iter().map(|&p| Some(p + 1.0)).collect();
        let d = StudyData::nested(preds, ys).unwrap();
        let s = quantile_strata(&d, 3).unwrap();
        let sizes: Vec<usize> = s.strata().iter().map(|s| s.data.pool_size()).collect();
        assert_eq!(sizes, vec![2, 2, 3]);
        assert_eq!(s.strata()[0].data.predictions(), &[0.0, 1.0]);
        assert_eq!(s.strata()[2].data.predictions(), &[4.0, 5.0, 7.0]);
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
