//! Seeded Monte Carlo checks of bias, variance and coverage.
//!
//! Every replicate draws from its own ChaCha8 stream: the key comes from
//! `master_seed` (via `seed_from_u64`) and the stream id is the replicate
//! index. A replicate's data therefore depends only on `(master_seed, index)`,
//! never on scheduling. Replicates run in parallel and their results are
//! reduced in index order, so reports are bit-identical for any thread count.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    labeled_only_mean, lambda_hat, ppi_mean, ppi_pp_mean, prediction_only_mean, EstimateOptions,
    VarianceMode, DEFAULT_LEVEL,
};
use crate::study::{mean, sample_variance, PoolKind, StudyData};
use crate::treatment::{ate_estimate, theoretical_bias, AteMethod, TwoArmStudy};

pub const DEFAULT_REPLICATIONS: u64 = 10_000;
pub const RNG_ALGORITHM: &str = "chacha8; key = seed_from_u64(master_seed); stream = replicate index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistFamily {
    #[default]
    Normal,
    /// Uniform with the given mean and standard deviation.
    Uniform,
}

impl DistFamily {
    fn draw(self, rng: &mut impl Rng, mean: f64, sd: f64) -> f64 {
        match self {
            DistFamily::Normal => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            DistFamily::Uniform => {
                let u: f64 = rng.random();
                mean + sd * 3f64.sqrt() * (2.0 * u - 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEstimator {
    Ppi,
    #[serde(rename = "ppipp")]
    PpiPlusPlus,
    LabeledOnly,
    PredictionOnly,
    #[serde(rename = "armwise")]
    ArmwiseRectifier,
    #[serde(rename = "pooled")]
    PooledRectifier,
    #[serde(rename = "naive")]
    NaiveImputation,
}

impl SimEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            SimEstimator::Ppi => "ppi",
            SimEstimator::PpiPlusPlus => "ppipp",
            SimEstimator::LabeledOnly => "labeled_only",
            SimEstimator::PredictionOnly => "prediction_only",
            SimEstimator::ArmwiseRectifier => "armwise",
            SimEstimator::PooledRectifier => "pooled",
            SimEstimator::NaiveImputation => "naive",
        }
    }

    fn ate_method(&self) -> Option<AteMethod> {
        match self {
            SimEstimator::ArmwiseRectifier => Some(AteMethod::ArmwiseRectifier),
            SimEstimator::PooledRectifier => Some(AteMethod::PooledRectifier),
            SimEstimator::NaiveImputation => Some(AteMethod::NaiveImputation),
            _ => None,
        }
    }
}

/// Per-arm design of a two-arm experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub size: usize,
    pub fraction: f64,
    pub outcome_mean: f64,
    /// Mean prediction error `δ_z = E[Y - Ŷ | Z = z]`.
    pub error_mean: f64,
}

/// Data-generating process and estimator selection. Parsed from flat TOML.
///
/// Outcomes are drawn from `outcome_dist(outcome_mean, outcome_sd)`, errors
/// `e` independently from `error_dist(error_mean, error_sd)`, and the
/// prediction is `Ŷ = Y - e`. With `arm0_*`/`arm1_*` keys the study is a
/// two-arm experiment and the per-arm means override the shared ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub master_seed: u64,

    #[serde(default)]
    pub population_size: Option<usize>,
    #[serde(default)]
    pub labeled: Option<usize>,
    #[serde(default)]
    pub labeled_fraction: Option<f64>,
    #[serde(default = "default_pool")]
    pub pool_kind: PoolKind,

    #[serde(default)]
    pub outcome_dist: DistFamily,
    #[serde(default)]
    pub outcome_mean: f64,
    #[serde(default = "one")]
    pub outcome_sd: f64,
    #[serde(default)]
    pub error_dist: DistFamily,
    #[serde(default)]
    pub error_mean: f64,
    #[serde(default = "one")]
    pub error_sd: f64,

    #[serde(default)]
    pub arm0_size: Option<usize>,
    #[serde(default)]
    pub arm0_fraction: Option<f64>,
    #[serde(default)]
    pub arm0_outcome_mean: Option<f64>,
    #[serde(default)]
    pub arm0_error_mean: Option<f64>,
    #[serde(default)]
    pub arm1_size: Option<usize>,
    #[serde(default)]
    pub arm1_fraction: Option<f64>,
    #[serde(default)]
    pub arm1_outcome_mean: Option<f64>,
    #[serde(default)]
    pub arm1_error_mean: Option<f64>,

    pub estimators: Vec<SimEstimator>,
    #[serde(default = "default_mode")]
    pub variance_mode: VarianceMode,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
}

fn default_replications() -> u64 {
    DEFAULT_REPLICATIONS
}
fn default_pool() -> PoolKind {
    PoolKind::NestedCensus
}
fn default_mode() -> VarianceMode {
    VarianceMode::DesignSrswor
}
fn one() -> f64 {
    1.0
}

impl SimulationConfig {
    /// A single-pool config with normal outcomes and errors.
    pub fn single(population_size: usize, labeled: usize, estimators: Vec<SimEstimator>) -> Self {
        SimulationConfig {
            replications: DEFAULT_REPLICATIONS,
            master_seed: 0,
            population_size: Some(population_size),
            labeled: Some(labeled),
            labeled_fraction: None,
            pool_kind: PoolKind::NestedCensus,
            outcome_dist: DistFamily::Normal,
            outcome_mean: 0.0,
            outcome_sd: 1.0,
            error_dist: DistFamily::Normal,
            error_mean: 0.0,
            error_sd: 1.0,
            arm0_size: None,
            arm0_fraction: None,
            arm0_outcome_mean: None,
            arm0_error_mean: None,
            arm1_size: None,
            arm1_fraction: None,
            arm1_outcome_mean: None,
            arm1_error_mean: None,
            estimators,
            variance_mode: VarianceMode::DesignSrswor,
            lambda_grid: None,
        }
    }

    /// A two-arm config; both arms share `size` and `fraction`.
    pub fn two_arm(size: usize, fraction: f64, deltas: [f64; 2], estimators: Vec<SimEstimator>) -> Self {
        let mut c = Self::single(size, 1, estimators);
        c.population_size = None;
        c.labeled = None;
        c.arm0_size = Some(size);
        c.arm1_size = Some(size);
        c.arm0_fraction = Some(fraction);
        c.arm1_fraction = Some(fraction);
        c.arm0_error_mean = Some(deltas[0]);
        c.arm1_error_mean = Some(deltas[1]);
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimulationConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn is_two_arm(&self) -> bool {
        self.arm0_size.is_some() || self.arm1_size.is_some()
    }

    pub fn arms(&self) -> Option<[ArmConfig; 2]> {
        if !self.is_two_arm() {
            return None;
        }
        let arm = |size: Option<usize>, f: Option<f64>, mu: Option<f64>, delta: Option<f64>| ArmConfig {
            size: size.unwrap_or(0),
            fraction: f.unwrap_or(f64::NAN),
            outcome_mean: mu.unwrap_or(self.outcome_mean),
            error_mean: delta.unwrap_or(self.error_mean),
        };
        Some([
            arm(self.arm0_size, self.arm0_fraction, self.arm0_outcome_mean, self.arm0_error_mean),
            arm(self.arm1_size, self.arm1_fraction, self.arm1_outcome_mean, self.arm1_error_mean),
        ])
    }

    /// `Cov(Y, Ŷ) / Var(Ŷ)` of the data-generating process.
    pub fn true_lambda(&self) -> f64 {
        let vy = self.outcome_sd * self.outcome_sd;
        vy / (vy + self.error_sd * self.error_sd)
    }

    /// Labeled count for a single-pool study.
    pub fn labeled_count(&self) -> Result<usize> {
        let big_n = self.population_size.ok_or_else(|| Error::Config("population_size is required".into()))?;
        match (self.labeled, self.labeled_fraction) {
            (Some(n), None) => Ok(n),
            (None, Some(f)) => fraction_count(f, big_n),
            _ => Err(Error::Config("set exactly one of labeled or labeled_fraction".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.replications < 1 {
            return bad("replications must be at least 1");
        }
        for (name, v) in [("outcome_sd", self.outcome_sd), ("error_sd", self.error_sd)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative")));
            }
        }
        if !self.outcome_mean.is_finite() || !self.error_mean.is_finite() {
            return bad("distribution means must be finite");
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required");
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.iter().any(|l| !l.is_finite()) {
                return bad("lambda_grid values must be finite");
            }
            if self.is_two_arm() {
                return bad("lambda_grid applies to single-pool studies only");
            }
        }
        if let Some(arms) = self.arms() {
            if self.population_size.is_some() || self.labeled.is_some() || self.labeled_fraction.is_some() {
                return bad("two-arm configs use arm0_*/arm1_* keys instead of population_size/labeled");
            }
            for (z, a) in arms.iter().enumerate() {
                if a.size == 0 {
                    return Err(Error::Config(format!("arm{z}_size must be positive")));
                }
                fraction_count(a.fraction, a.size).map_err(|_| {
                    Error::Config(format!("arm{z}_fraction must lie in (0, 1]"))
                })?;
                if !a.outcome_mean.is_finite() || !a.error_mean.is_finite() {
                    return Err(Error::Config(format!("arm{z} means must be finite")));
                }
            }
            if self.pool_kind != PoolKind::NestedCensus {
                return bad("two-arm studies use nested pools");
            }
            if self.variance_mode != VarianceMode::DesignSrswor {
                return bad("two-arm studies support design variance only");
            }
            if let Some(e) = self.estimators.iter().find(|e| e.ate_method().is_none()) {
                return Err(Error::Config(format!("estimator {} needs a single-pool study", e.name())));
            }
        } else {
            let big_n = self
                .population_size
                .ok_or_else(|| Error::Config("population_size is required".into()))?;
            let n = self.labeled_count()?;
            if n < 1 || big_n < 1 {
                return bad("population_size and labeled count must be positive");
            }
            if n > big_n {
                return bad("labeled count exceeds population_size");
            }
            if self.pool_kind == PoolKind::IndependentSample && self.variance_mode != VarianceMode::SuperpopIndependent {
                return bad("independent pools need variance_mode = \"superpop_independent\"");
            }
            if let Some(e) = self.estimators.iter().find(|e| e.ate_method().is_some()) {
                return Err(Error::Config(format!("estimator {} needs a two-arm study", e.name())));
            }
        }
        Ok(())
    }
}

fn fraction_count(f: f64, size: usize) -> Result<usize> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::InvalidFraction(f));
    }
    Ok(((f * size as f64).round() as usize).clamp(1, size))
}

/// RNG for one replicate.
pub fn replicate_rng(master_seed: u64, replicate_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate_index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratedStudy {
    Single {
        data: StudyData,
        /// Mean outcome over the pool (the finite-population target).
        finite_mean: f64,
        /// Mean of `Y - Ŷ` over the whole pool.
        pool_residual_mean: f64,
    },
    TwoArm {
        study: TwoArmStudy,
        finite_means: [f64; 2],
        pool_residual_means: [f64; 2],
    },
}

struct Population {
    outcomes: Vec<f64>,
    predictions: Vec<f64>,
}

impl Population {
    fn residual_mean(&self) -> f64 {
        mean(self.outcomes.iter().zip(&self.predictions).map(|(y, p)| y - p))
    }
}

fn draw_population(cfg: &SimulationConfig, rng: &mut ChaCha8Rng, size: usize, mu: f64, delta: f64) -> Population {
    let mut outcomes = Vec::with_capacity(size);
    let mut predictions = Vec::with_capacity(size);
    for _ in 0..size {
        let y = cfg.outcome_dist.draw(rng, mu, cfg.outcome_sd);
        let e = cfg.error_dist.draw(rng, delta, cfg.error_sd);
        outcomes.push(y);
        predictions.push(y - e);
    }
    Population { outcomes, predictions }
}

fn srswor(rng: &mut ChaCha8Rng, size: usize, n: usize) -> Vec<usize> {
    let mut idx = sample(rng, size, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Draws replicate `replicate_index`; deterministic in `(master_seed, replicate_index)`.
pub fn generate_study(cfg: &SimulationConfig, replicate_index: u64) -> Result<GeneratedStudy> {
    cfg.validate()?;
    let mut rng = replicate_rng(cfg.master_seed, replicate_index);
    if let Some(arms) = cfg.arms() {
        let mut studies = Vec::with_capacity(2);
        let mut finite_means = [0.0; 2];
        let mut pool_residual_means = [0.0; 2];
        for (z, arm) in arms.iter().enumerate() {
            let pop = draw_population(cfg, &mut rng, arm.size, arm.outcome_mean, arm.error_mean);
            let n = fraction_count(arm.fraction, arm.size)?;
            let labeled = srswor(&mut rng, arm.size, n);
            finite_means[z] = mean(pop.outcomes.iter().copied());
            pool_residual_means[z] = pop.residual_mean();
            studies.push(StudyData::from_population(&pop.outcomes, &pop.predictions, &labeled)?);
        }
        let arm1 = studies.pop().expect("two arms");
        let arm0 = studies.pop().expect("two arms");
        return Ok(GeneratedStudy::TwoArm {
            study: TwoArmStudy::new(arm0, arm1)?,
            finite_means,
            pool_residual_means,
        });
    }

    let big_n = cfg.population_size.expect("validated");
    let n = cfg.labeled_count()?;
    let pop = draw_population(cfg, &mut rng, big_n, cfg.outcome_mean, cfg.error_mean);
    let finite_mean = mean(pop.outcomes.iter().copied());
    let pool_residual_mean = pop.residual_mean();
    let data = match cfg.pool_kind {
        PoolKind::NestedCensus => {
            let labeled = srswor(&mut rng, big_n, n);
            StudyData::from_population(&pop.outcomes, &pop.predictions, &labeled)?
        }
        PoolKind::IndependentSample => {
            let extra = draw_population(cfg, &mut rng, n, cfg.outcome_mean, cfg.error_mean);
            let pairs = extra.outcomes.into_iter().zip(extra.predictions).collect();
            StudyData::independent(pop.predictions, pairs)?
        }
    };
    Ok(GeneratedStudy::Single {
        data,
        finite_mean,
        pool_residual_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub estimator: String,
    pub lambda: Option<f64>,
    pub mean_estimate: f64,
    /// Mean of `estimate - target` over replicates.
    pub empirical_bias: f64,
    pub mc_std_error_of_bias: f64,
    /// Sample variance of `estimate - target`.
    pub empirical_variance: f64,
    pub mean_estimated_variance: f64,
    pub coverage_at_95: f64,
    pub theoretical_bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub true_lambda: f64,
    pub mean_lambda_hat: f64,
    pub mc_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub replications: u64,
    pub master_seed: u64,
    pub rng: String,
    /// `finite_population` or `superpopulation`.
    pub target: String,
    pub rows: Vec<EstimatorRow>,
    pub lambda_summary: Option<LambdaSummary>,
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    estimate: f64,
    variance: f64,
    target: f64,
}

struct RowSpec {
    label: String,
    estimator: SimEstimator,
    lambda: Option<f64>,
    theoretical_bias: Option<f64>,
}

struct Replicate {
    draws: Vec<Draw>,
    lambda_hat: Option<f64>,
}

fn row_specs(cfg: &SimulationConfig) -> Result<Vec<RowSpec>> {
    let mut specs = Vec::new();
    let arms = cfg.arms();
    for &e in &cfg.estimators {
        let theoretical_bias = match (e.ate_method(), arms) {
            (Some(m), Some(a)) => {
                let f0 = fraction_count(a[0].fraction, a[0].size)? as f64 / a[0].size as f64;
                let f1 = fraction_count(a[1].fraction, a[1].size)? as f64 / a[1].size as f64;
                Some(theoretical_bias(m, a[0].error_mean, a[1].error_mean, f0, f1)?)
            }
            _ => match e {
                SimEstimator::Ppi | SimEstimator::LabeledOnly => Some(0.0),
                SimEstimator::PredictionOnly => Some(0.0 - cfg.error_mean),
                _ => None,
            },
        };
        specs.push(RowSpec {
            label: e.name().to_string(),
            estimator: e,
            lambda: None,
            theoretical_bias,
        });
    }
    for &l in cfg.lambda_grid.iter().flatten() {
        specs.push(RowSpec {
            label: format!("ppipp_lambda_{l}"),
            estimator: SimEstimator::PpiPlusPlus,
            lambda: Some(l),
            theoretical_bias: (cfg.variance_mode == VarianceMode::DesignSrswor).then_some(0.0),
        });
    }
    Ok(specs)
}

fn run_one(cfg: &SimulationConfig, specs: &[RowSpec], index: u64) -> Result<Replicate> {
    let opts = EstimateOptions {
        variance_mode: cfg.variance_mode,
        level: DEFAULT_LEVEL,
    };
    let mut draws = Vec::with_capacity(specs.len());
    match generate_study(cfg, index)? {
        GeneratedStudy::TwoArm { study, finite_means, .. } => {
            let target = finite_means[1] - finite_means[0];
            for spec in specs {
                let method = spec.estimator.ate_method().expect("validated");
                let r = ate_estimate(&study, method, DEFAULT_LEVEL)?;
                draws.push(Draw {
                    estimate: r.tau_hat,
                    variance: r.variance,
                    target,
                });
            }
            Ok(Replicate { draws, lambda_hat: None })
        }
        GeneratedStudy::Single { data, finite_mean, .. } => {
            let target = if cfg.variance_mode == VarianceMode::DesignSrswor {
                finite_mean
            } else {
                cfg.outcome_mean
            };
            let mut lambda_est = None;
            for spec in specs {
                let r = match (spec.estimator, spec.lambda) {
                    (SimEstimator::Ppi, _) => ppi_mean(&data, &opts)?,
                    (SimEstimator::PpiPlusPlus, l) => ppi_pp_mean(&data, l, &opts)?,
                    (SimEstimator::LabeledOnly, _) => labeled_only_mean(&data, &opts)?,
                    (SimEstimator::PredictionOnly, _) => prediction_only_mean(&data, &opts)?,
                    _ => unreachable!("validated"),
                };
                draws.push(Draw {
                    estimate: r.point,
                    variance: r.variance,
                    target,
                });
            }
            if cfg.lambda_grid.is_some() || cfg.estimators.contains(&SimEstimator::PpiPlusPlus) {
                lambda_est = Some(lambda_hat(&data)?);
            }
            Ok(Replicate {
                draws,
                lambda_hat: lambda_est,
            })
        }
    }
}

/// Runs all replicates and aggregates one row per estimator (and per λ-grid value).
pub fn run_replications(cfg: &SimulationConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let specs = row_specs(cfg)?;
    let reps: Vec<Replicate> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| {
            run_one(cfg, &specs, i).map_err(|e| Error::Replicate {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let z = crate::estimator::normal_quantile_two_sided(0.95)?;
    let r = reps.len() as f64;
    let rows = specs
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let errors: Vec<f64> = reps.iter().map(|rep| rep.draws[k].estimate - rep.draws[k].target).collect();
            let covered = reps
                .iter()
                .filter(|rep| {
                    let d = rep.draws[k];
                    (d.estimate - d.target).abs() <= z * d.variance.sqrt()
                })
                .count();
            let emp_var = if errors.len() >= 2 { sample_variance(&errors) } else { 0.0 };
            EstimatorRow {
                estimator: spec.label.clone(),
                lambda: spec.lambda,
                mean_estimate: mean(reps.iter().map(|rep| rep.draws[k].estimate)),
                empirical_bias: mean(errors.iter().copied()),
                mc_std_error_of_bias: (emp_var / r).sqrt(),
                empirical_variance: emp_var,
                mean_estimated_variance: mean(reps.iter().map(|rep| rep.draws[k].variance)),
                coverage_at_95: covered as f64 / r,
                theoretical_bias: spec.theoretical_bias,
            }
        })
        .collect();

    let lambda_summary = if reps.first().is_some_and(|rep| rep.lambda_hat.is_some()) {
        let lambdas: Vec<f64> = reps.iter().filter_map(|rep| rep.lambda_hat).collect();
        let var = if lambdas.len() >= 2 { sample_variance(&lambdas) } else { 0.0 };
        Some(LambdaSummary {
            true_lambda: cfg.true_lambda(),
            mean_lambda_hat: mean(lambdas.iter().copied()),
            mc_std_error: (var / lambdas.len() as f64).sqrt(),
        })
    } else {
        None
    };

    Ok(SimulationReport {
        replications: cfg.replications,
        master_seed: cfg.master_seed,
        rng: RNG_ALGORITHM.to_string(),
        target: if cfg.is_two_arm() || cfg.variance_mode == VarianceMode::DesignSrswor {
            "finite_population".into()
        } else {
            "superpopulation".into()
        },
        rows,
        lambda_summary,
    })
}

impl SimulationReport {
    pub fn row(&self, estimator: &str) -> Option<&EstimatorRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_when_error_free() {
        let mut cfg = SimulationConfig::single(50, 10, vec![SimEstimator::Ppi]);
        cfg.error_sd = 0.0;
        let GeneratedStudy::Single { data, .. } = generate_study(&cfg, 3).unwrap() else {
            panic!("single study expected")
        };
        assert!(data.labeled_pairs().all(|(y, p)| y == p));
    }

    #[test]
    fn same_seed_and_index_is_bit_identical() {
        let cfg = SimulationConfig::two_arm(40, 0.25, [0.5, -0.3], vec![SimEstimator::ArmwiseRectifier]);
        assert_eq!(generate_study(&cfg, 7).unwrap(), generate_study(&cfg, 7).unwrap());
        assert_ne!(generate_study(&cfg, 7).unwrap(), generate_study(&cfg, 8).unwrap());
    }

    #[test]
    fn arm_residual_means_follow_deltas() {
        let cfg = SimulationConfig::two_arm(10_000, 0.1, [0.5, -0.3], vec![SimEstimator::ArmwiseRectifier]);
        let GeneratedStudy::TwoArm { pool_residual_means, .. } = generate_study(&cfg, 0).unwrap() else {
            panic!("two-arm study expected")
        };
        let tol = 3.0 * cfg.error_sd / 10_000f64.sqrt();
        assert!((pool_residual_means[0] - 0.5).abs() < tol, "{pool_residual_means:?}");
        assert!((pool_residual_means[1] + 0.3).abs() < tol, "{pool_residual_means:?}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let text = r#"
replications = 200
master_seed = 9
population_size = 500
labeled_fraction = 0.1
error_sd = 0.5
estimators = ["ppi", "ppipp", "labeled_only"]
lambda_grid = [0.0, 0.5, 1.0]
"#;
        let cfg = SimulationConfig::from_toml(text).unwrap();
        assert_eq!(cfg.labeled_count().unwrap(), 50);
        assert_eq!(SimulationConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        assert!(SimulationConfig::from_toml("estimators = [\"ppi\"]").is_err());
        assert!(SimulationConfig::from_toml("population_size = 10\nlabeled = 2\nestimators = [\"armwise\"]").is_err());
        assert!(SimulationConfig::from_toml("population_size = 10\nlabeled = 2\nestimators = [\"ppi\"]\nbogus = 1").is_err());
        assert!(SimulationConfig::from_toml("population_size = 10\nlabeled = 2\nerror_sd = -1\nestimators = [\"ppi\"]").is_err());
        assert!(SimulationConfig::from_toml("population_size = 10\nlabeled_fraction = 1.5\nestimators = [\"ppi\"]").is_err());
        assert!(SimulationConfig::from_toml("replications = 0\npopulation_size = 10\nlabeled = 2\nestimators = [\"ppi\"]").is_err());
    }

    #[test]
    fn replicate_errors_carry_index() {
        let mut cfg = SimulationConfig::single(20, 3, vec![SimEstimator::PpiPlusPlus]);
        cfg.outcome_sd = 0.0;
        cfg.error_sd = 0.0;
        cfg.replications = 5;
        match run_replications(&cfg) {
            Err(Error::Replicate { index: 0, source }) => {
                assert!(matches!(*source, Error::ConstantPredictions))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
