//! Mean estimation from a labeled subsample plus predictions over a pool.
//!
//! The PPI estimator and the survey difference estimator are one formula, so
//! [`ppi_point`] is the single implementation behind both
//! ([`difference_estimate`] is an alias). Likewise the PPI++ tuning parameter
//! and the GREG slope are the same statistic, computed by [`lambda_hat`].

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::study::{mean, sample_covariance, sample_variance, PoolKind, StudyData};

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LabeledOnly,
    PredictionOnly,
    Ppi,
    #[serde(rename = "ppipp")]
    PpiPlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Simple random sampling without replacement from a fixed finite pool.
    DesignSrswor,
    SuperpopIndependent,
    SuperpopNested,
}

impl VarianceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            VarianceMode::DesignSrswor => "design",
            VarianceMode::SuperpopIndependent => "superpop-indep",
            VarianceMode::SuperpopNested => "superpop-nested",
        }
    }

    /// The natural mode for a pool layout under superpopulation inference.
    pub fn superpop_for(kind: PoolKind) -> Self {
        match kind {
            PoolKind::NestedCensus => VarianceMode::SuperpopNested,
            PoolKind::IndependentSample => VarianceMode::SuperpopIndependent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub variance_mode: VarianceMode,
    pub level: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            variance_mode: VarianceMode::DesignSrswor,
            level: DEFAULT_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub point: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub method: Method,
    pub variance_mode: VarianceMode,
    pub lambda: Option<f64>,
    pub n: usize,
    pub pool_size: usize,
    /// Set when a negative plug-in variance was clamped to zero.
    pub variance_clamped: bool,
    pub notes: Vec<String>,
}

/// Plug-in second moments over the labeled units (divisor n - 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub n: usize,
    pub mean_residual: f64,
    pub sigma_e2: f64,
    pub sigma_yhat2: f64,
    pub cov_y_yhat: f64,
    pub var_y: f64,
    /// Finite-population residual variance (divisor N - 1), available only
    /// when every pool unit is labeled.
    pub population_sigma_e2: Option<f64>,
}

pub fn sample_moments(data: &StudyData) -> Result<MomentSummary> {
    let n = data.n();
    if n < 2 {
        return Err(Error::DegenerateSample { needed: 2, found: n });
    }
    let (ys, yhats): (Vec<f64>, Vec<f64>) = data.labeled_pairs().unzip();
    let residuals = data.residuals();
    let population_sigma_e2 = (data.pool_kind() == PoolKind::NestedCensus
        && n == data.pool_size())
    .then_some(residuals.sample_variance);
    Ok(MomentSummary {
        n,
        mean_residual: residuals.mean,
        sigma_e2: residuals.sample_variance,
        sigma_yhat2: sample_variance(&yhats),
        cov_y_yhat: sample_covariance(&ys, &yhats),
        var_y: sample_variance(&ys),
        population_sigma_e2,
    })
}

/// `S_e^2` of a fully known finite population, divisor N - 1.
pub fn population_residual_variance(outcomes: &[f64], predictions: &[f64]) -> f64 {
    let e: Vec<f64> = outcomes.iter().zip(predictions).map(|(y, p)| y - p).collect();
    sample_variance(&e)
}

/// Prediction average plus the labeled mean residual.
pub fn ppi_point(data: &StudyData) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::no_labels());
    }
    Ok(data.pool_prediction_mean() + data.residuals().mean)
}

/// The survey difference estimator; identical to [`ppi_point`].
pub fn difference_estimate(data: &StudyData) -> Result<f64> {
    ppi_point(data)
}

/// Labeled outcome mean shifted by `lambda` times the pool-vs-labeled prediction gap.
pub fn ppi_pp_point(data: &StudyData, lambda: f64) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::no_labels());
    }
    let y_bar = mean(data.labeled_outcomes());
    let yhat_labeled = mean(data.labeled_predictions());
    Ok(y_bar + lambda * (data.pool_prediction_mean() - yhat_labeled))
}

pub fn labeled_only_point(data: &StudyData) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::no_labels());
    }
    Ok(mean(data.labeled_outcomes()))
}

/// `Cov(Y, Ŷ) / Var(Ŷ)` over the labeled units: the variance-optimal PPI++
/// weight and the GREG slope. Not clipped.
pub fn lambda_hat(data: &StudyData) -> Result<f64> {
    let moments = sample_moments(data)?;
    let mut preds = data.labeled_predictions();
    let first = preds.next();
    if first.is_some_and(|f| preds.all(|p| p == f)) || moments.sigma_yhat2 <= 0.0 {
        return Err(Error::ConstantPredictions);
    }
    Ok(moments.cov_y_yhat / moments.sigma_yhat2)
}

/// `(1 - n/N) S_e^2 / n` with `S_e^2` estimated by the labeled residual variance.
pub fn variance_design(data: &StudyData, moments: &MomentSummary) -> Result<f64> {
    if data.pool_kind() != PoolKind::NestedCensus {
        return Err(Error::WrongMode {
            requested: VarianceMode::DesignSrswor.as_str(),
            pool: data.pool_kind().as_str(),
        });
    }
    Ok(design_variance(moments.sigma_e2, moments.n, data.pool_size()))
}

/// Superpopulation variance of the PPI estimator, choosing the independent or
/// nested form from the pool layout. Negative nested values are clamped to 0.
pub fn variance_superpop(data: &StudyData, moments: &MomentSummary) -> Result<f64> {
    let (v, _) = superpop_variance(
        moments.sigma_e2,
        moments.sigma_yhat2,
        moments.n,
        data.pool_size(),
        data.pool_kind(),
    );
    Ok(v)
}

pub fn design_variance(residual_variance: f64, n: usize, pool_size: usize) -> f64 {
    let fpc = 1.0 - n as f64 / pool_size as f64;
    fpc * residual_variance / n as f64
}

/// Returns the (possibly clamped) variance and whether clamping happened.
///
/// Independent: `σ_e²/n + σ_Ŷ²/N`. Nested: additionally `- σ_e²/N`.
pub fn superpop_variance(
    residual_variance: f64,
    prediction_variance: f64,
    n: usize,
    pool_size: usize,
    kind: PoolKind,
) -> (f64, bool) {
    let raw = superpop_variance_unclamped(residual_variance, prediction_variance, n, pool_size, kind);
    if raw < 0.0 {
        log::warn!("nested superpopulation variance {raw} is negative; clamping to 0");
        (0.0, true)
    } else {
        (raw, false)
    }
}

pub fn superpop_variance_unclamped(
    residual_variance: f64,
    prediction_variance: f64,
    n: usize,
    pool_size: usize,
    kind: PoolKind,
) -> f64 {
    let big_n = pool_size as f64;
    let independent = residual_variance / n as f64 + prediction_variance / big_n;
    match kind {
        PoolKind::IndependentSample => independent,
        PoolKind::NestedCensus => independent - residual_variance / big_n,
    }
}

/// Normal-approximation interval `point ± z_{(1+level)/2} sqrt(variance)`.
pub fn confidence_interval(point: f64, variance: f64, level: f64) -> Result<(f64, f64)> {
    let z = normal_quantile_two_sided(level)?;
    if !variance.is_finite() || variance < 0.0 {
        return Err(Error::InvalidVariance(variance));
    }
    let half = z * variance.sqrt();
    Ok((point - half, point + half))
}

pub(crate) fn normal_quantile_two_sided(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let std_normal = Normal::standard();
    Ok(std_normal.inverse_cdf((1.0 + level) / 2.0))
}

/// Plug-in variance of the λ-weighted estimator under the requested mode.
///
/// `Var̂(Y - λŶ)` plays the role of the residual variance; at λ = 1 this is
/// exactly the PPI variance and at λ = 0 the labeled-only variance.
fn lambda_variance(data: &StudyData, lambda: f64, mode: VarianceMode) -> Result<(f64, bool)> {
    let n = data.n();
    if n < 2 {
        return Err(Error::DegenerateSample { needed: 2, found: n });
    }
    check_mode(data, mode)?;
    let adjusted: Vec<f64> = data.labeled_pairs().map(|(y, p)| y - lambda * p).collect();
    let resid_var = sample_variance(&adjusted);
    let big_n = data.pool_size();
    Ok(match mode {
        VarianceMode::DesignSrswor => (design_variance(resid_var, n, big_n), false),
        VarianceMode::SuperpopIndependent | VarianceMode::SuperpopNested => {
            let preds: Vec<f64> = data.labeled_predictions().collect();
            let pred_term = lambda * lambda * sample_variance(&preds);
            let kind = if mode == VarianceMode::SuperpopNested {
                PoolKind::NestedCensus
            } else {
                PoolKind::IndependentSample
            };
            superpop_variance(resid_var, pred_term, n, big_n, kind)
        }
    })
}

fn check_mode(data: &StudyData, mode: VarianceMode) -> Result<()> {
    let ok = match mode {
        VarianceMode::DesignSrswor | VarianceMode::SuperpopNested => {
            data.pool_kind() == PoolKind::NestedCensus
        }
        // Ignoring the overlap of a nested pool is conservative, so allowed.
        VarianceMode::SuperpopIndependent => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::WrongMode {
            requested: mode.as_str(),
            pool: data.pool_kind().as_str(),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    data: &StudyData,
    point: f64,
    (variance, clamped): (f64, bool),
    method: Method,
    lambda: Option<f64>,
    opts: &EstimateOptions,
    mut notes: Vec<String>,
) -> Result<EstimateReport> {
    let (ci_low, ci_high) = confidence_interval(point, variance, opts.level)?;
    notes.insert(0, "variance plugs in labeled-sample moments; the population residual variance S_e^2 is replaced by its sample estimate".into());
    if clamped {
        notes.push("negative nested plug-in variance clamped to 0".into());
    }
    Ok(EstimateReport {
        point,
        variance,
        std_error: variance.sqrt(),
        ci_low,
        ci_high,
        level: opts.level,
        method,
        variance_mode: opts.variance_mode,
        lambda,
        n: data.n(),
        pool_size: data.pool_size(),
        variance_clamped: clamped,
        notes,
    })
}

/// PPI (difference) estimate with its variance and interval. Needs n >= 2.
pub fn ppi_mean(data: &StudyData, opts: &EstimateOptions) -> Result<EstimateReport> {
    let point = ppi_point(data)?;
    let variance = lambda_variance(data, 1.0, opts.variance_mode)?;
    build_report(data, point, variance, Method::Ppi, Some(1.0), opts, Vec::new())
}

/// PPI++ (GREG) estimate. `lambda = None` uses [`lambda_hat`].
pub fn ppi_pp_mean(
    data: &StudyData,
    lambda: Option<f64>,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    let mut notes = Vec::new();
    let lambda = match lambda {
        Some(l) => l,
        None => {
            notes.push("lambda estimated from the labeled units and treated as fixed in the variance".into());
            lambda_hat(data)?
        }
    };
    if !lambda.is_finite() {
        return Err(Error::InvalidStudy(format!("lambda must be finite, got {lambda}")));
    }
    let point = ppi_pp_point(data, lambda)?;
    let variance = lambda_variance(data, lambda, opts.variance_mode)?;
    notes.push(
        "PPI++ variance is a plug-in extrapolation using Var(Y - lambda*Yhat) in place of the residual variance"
            .into(),
    );
    build_report(data, point, variance, Method::PpiPlusPlus, Some(lambda), opts, notes)
}

pub fn labeled_only_mean(data: &StudyData, opts: &EstimateOptions) -> Result<EstimateReport> {
    let point = labeled_only_point(data)?;
    let variance = lambda_variance(data, 0.0, opts.variance_mode)?;
    build_report(data, point, variance, Method::LabeledOnly, Some(0.0), opts, Vec::new())
}

/// Mean of the pool predictions alone. Biased by the mean prediction error,
/// which the reported variance does not account for.
pub fn prediction_only_mean(data: &StudyData, opts: &EstimateOptions) -> Result<EstimateReport> {
    check_mode(data, opts.variance_mode)?;
    let pool: Vec<f64> = data.pool_predictions().collect();
    let point = mean(pool.iter().copied());
    let variance = match opts.variance_mode {
        // The pool mean is a known constant under the design.
        VarianceMode::DesignSrswor => 0.0,
        _ if pool.len() < 2 => return Err(Error::DegenerateSample { needed: 2, found: pool.len() }),
        _ => sample_variance(&pool) / pool.len() as f64,
    };
    build_report(
        data,
        point,
        (variance, false),
        Method::PredictionOnly,
        None,
        opts,
        vec!["prediction-only estimate ignores prediction bias".into()],
    )
}
