//! Prediction-powered inference and model-assisted survey estimation.
//!
//! A small labeled sample of gold-standard outcomes is combined with machine
//! predictions over a larger pool. The crate provides the PPI / difference
//! estimator and its tuned PPI++ / GREG form, design-based and
//! superpopulation variances, treatment-effect estimators with their
//! closed-form biases, stratified estimation with Neyman allocation, design
//! diagnostics, and a seeded Monte Carlo harness that checks all of it.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod io;
pub mod simulation;
pub mod stratified;
pub mod study;
pub mod treatment;

pub use error::{Error, Result};
pub use estimator::{
    confidence_interval, difference_estimate, labeled_only_mean, lambda_hat, ppi_mean, ppi_point,
    ppi_pp_mean, ppi_pp_point, prediction_only_mean, sample_moments, variance_design,
    variance_superpop, EstimateOptions, EstimateReport, Method, MomentSummary, VarianceMode,
};
pub use simulation::{run_replications, generate_study, SimulationConfig, SimulationReport};
pub use stratified::{neyman_allocation, stratified_ppi_mean, AllocationPlan, StratifiedStudy};
pub use study::{PoolKind, Residuals, StudyData};
pub use treatment::{ate_estimate, theoretical_bias, AteMethod, AteReport, TwoArmStudy};
