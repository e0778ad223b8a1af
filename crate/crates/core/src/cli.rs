//! Command-line dispatch for the `rectify` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose, DiagnosticThresholds};
use crate::error::Error;
use crate::estimator::{
    labeled_only_mean, ppi_mean, ppi_pp_mean, EstimateOptions, EstimateReport, VarianceMode, DEFAULT_LEVEL,
};
use crate::io::{emit_report, parse_study_csv, StudyTable, CSV_SCHEMA_HELP};
use crate::simulation::{run_replications, SimulationConfig};
use crate::stratified::{
    neyman_allocation, quantile_strata, stratified_ppi_mean, AllocationPlan, StratifiedStudy,
    DEFAULT_MIN_PER_STRATUM, DEFAULT_QUANTILE_BINS,
};
use crate::study::{sample_variance, PoolKind};
use crate::treatment::{ate_estimate, AteMethod};

pub const SEED_ENV: &str = "RECTIFY_SEED";

#[derive(Debug, Parser)]
#[command(name = "rectify", version, about = "Prediction-powered and model-assisted mean estimation")]
#[command(after_help = CSV_SCHEMA_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a population mean from one study file.
    Estimate(EstimateArgs),
    /// Estimate an average treatment effect from a two-arm study file.
    Ate(AteArgs),
    /// Stratified PPI estimate.
    Stratified(StratifiedArgs),
    /// Neyman allocation of a labeling budget across strata.
    Allocate(AllocateArgs),
    /// Design effect, residual subgroups, exchangeability and negative control.
    Diagnose(DiagnoseArgs),
    /// Monte Carlo study driven by a TOML config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliMethod {
    Ppi,
    Ppipp,
    LabeledOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliVariance {
    Design,
    SuperpopIndep,
    SuperpopNested,
}

impl From<CliVariance> for VarianceMode {
    fn from(v: CliVariance) -> Self {
        match v {
            CliVariance::Design => VarianceMode::DesignSrswor,
            CliVariance::SuperpopIndep => VarianceMode::SuperpopIndependent,
            CliVariance::SuperpopNested => VarianceMode::SuperpopNested,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliPool {
    /// Labeled rows are part of the pool.
    Nested,
    /// Labeled rows are a separate sample; the pool is the unlabeled rows.
    Independent,
}

impl From<CliPool> for PoolKind {
    fn from(p: CliPool) -> Self {
        match p {
            CliPool::Nested => PoolKind::NestedCensus,
            CliPool::Independent => PoolKind::IndependentSample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Auto,
    Fixed(f64),
}

fn parse_lambda(s: &str) -> Result<LambdaArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(LambdaArg::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(LambdaArg::Fixed(v)),
        _ => Err(format!("expected `auto` or a finite number, got {s:?}")),
    }
}

#[derive(Debug, clap::Args)]
pub struct EstimateArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "ppi")]
    pub method: CliMethod,
    /// `auto` or a fixed real; only used by ppipp.
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: Option<LambdaArg>,
    #[arg(long, value_enum, default_value = "design")]
    pub variance: CliVariance,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long, value_enum, default_value = "nested")]
    pub pool: CliPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliAteMethod {
    Armwise,
    Pooled,
    Naive,
}

impl From<CliAteMethod> for AteMethod {
    fn from(m: CliAteMethod) -> Self {
        match m {
            CliAteMethod::Armwise => AteMethod::ArmwiseRectifier,
            CliAteMethod::Pooled => AteMethod::PooledRectifier,
            CliAteMethod::Naive => AteMethod::NaiveImputation,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct AteArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "armwise")]
    pub method: CliAteMethod,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, clap::Args)]
pub struct StrataArgs {
    /// Prediction-quantile strata to form when the file has no stratum column.
    #[arg(long, default_value_t = DEFAULT_QUANTILE_BINS)]
    pub bins: usize,
}

#[derive(Debug, clap::Args)]
pub struct StratifiedArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub strata: StrataArgs,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, clap::Args)]
pub struct AllocateArgs {
    /// Pilot study: pool sizes and residual dispersions are taken per stratum.
    pub input: PathBuf,
    #[arg(long)]
    pub budget: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_PER_STRATUM)]
    pub min_per_stratum: usize,
    #[command(flatten)]
    pub strata: StrataArgs,
}

#[derive(Debug, clap::Args)]
pub struct DiagnoseArgs {
    pub input: PathBuf,
    /// Two-arm file whose outcome should show no treatment effect.
    #[arg(long)]
    pub negative_control: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub subgroup_z: f64,
    #[arg(long, default_value_t = 0.2)]
    pub ks_threshold: f64,
    #[arg(long, default_value_t = 2.0)]
    pub negative_control_z: f64,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub id: String,
    pub pool_size: usize,
    pub labeled: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedOutput {
    pub estimate: EstimateReport,
    pub strata: Vec<StratumSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutput {
    pub strata: Vec<String>,
    pub plan: AllocationPlan,
    pub objective: f64,
}

enum Failure {
    Usage(String),
    Domain(String),
}

fn at(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Domain(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<StudyTable, Failure> {
    parse_study_csv(path).map_err(at(path))
}

/// Runs the CLI with `RECTIFY_SEED` read from the process environment.
pub fn run_from_env(args: impl IntoIterator<Item = OsString>) -> i32 {
    let seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, seed.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` (including the program name), executes the command and
/// returns the process exit code: 0 on success, 1 on a validation error and
/// 2 on a usage error.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = if e.use_stderr() {
                format!("{}\n{CSV_SCHEMA_HELP}\n", e.render())
            } else {
                e.render().to_string()
            };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(&cli.command, env_seed) {
        Ok(text) => match out.write_all(text.as_bytes()) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                1
            }
        },
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\n{CSV_SCHEMA_HELP}");
            2
        }
        Err(Failure::Domain(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn execute(command: &Command, env_seed: Option<&str>) -> Result<String, Failure> {
    match command {
        Command::Estimate(a) => {
            let table = load(&a.input)?;
            let report = estimate_from_table(&table, a).map_err(at(&a.input))?;
            Ok(emit_report("estimate", &report))
        }
        Command::Ate(a) => {
            let table = load(&a.input)?;
            let study = table.two_arm().map_err(at(&a.input))?;
            let report = ate_estimate(&study, a.method.into(), a.level).map_err(at(&a.input))?;
            Ok(emit_report("ate", &report))
        }
        Command::Stratified(a) => {
            let table = load(&a.input)?;
            let study = strata_of(&table, &a.strata).map_err(at(&a.input))?;
            let estimate = stratified_ppi_mean(&study, a.level).map_err(at(&a.input))?;
            let strata = study
                .strata()
                .iter()
                .zip(study.weights())
                .map(|(s, weight)| StratumSummary {
                    id: s.id.clone(),
                    pool_size: s.data.pool_size(),
                    labeled: s.data.n(),
                    weight,
                })
                .collect();
            Ok(emit_report("stratified", &StratifiedOutput { estimate, strata }))
        }
        Command::Allocate(a) => {
            let table = load(&a.input)?;
            let output = allocate_from_table(&table, a).map_err(at(&a.input))?;
            Ok(emit_report("allocate", &output))
        }
        Command::Diagnose(a) => {
            let table = load(&a.input)?;
            let data = table.study(PoolKind::NestedCensus).map_err(at(&a.input))?;
            let groups = if table.has_strata() {
                Some(table.stratum_groups())
            } else if table.has_arms() {
                Some(table.arm_groups())
            } else {
                None
            };
            let nc = match &a.negative_control {
                Some(path) => Some(load(path)?.two_arm().map_err(at(path))?),
                None => None,
            };
            let thresholds = DiagnosticThresholds {
                subgroup_z: a.subgroup_z,
                exchangeability_ks: a.ks_threshold,
                negative_control_z: a.negative_control_z,
            };
            let report = diagnose(&data, groups.as_deref(), nc.as_ref(), thresholds).map_err(at(&a.input))?;
            Ok(emit_report("diagnose", &report))
        }
        Command::Simulate(a) => {
            let text = std::fs::read_to_string(&a.config).map_err(|e| at(&a.config)(e.into()))?;
            let mut cfg = SimulationConfig::from_toml(&text).map_err(at(&a.config))?;
            if let Some(seed) = env_seed {
                cfg.master_seed = seed
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got {seed:?}")))?;
            }
            let report = run_replications(&cfg).map_err(at(&a.config))?;
            Ok(emit_report("simulate", &report))
        }
    }
}

/// The library call behind `rectify estimate`.
pub fn estimate_from_table(table: &StudyTable, args: &EstimateArgs) -> crate::Result<EstimateReport> {
    let data = table.study(args.pool.into())?;
    let opts = EstimateOptions {
        variance_mode: args.variance.into(),
        level: args.level,
    };
    match args.method {
        CliMethod::Ppi => ppi_mean(&data, &opts),
        CliMethod::LabeledOnly => labeled_only_mean(&data, &opts),
        CliMethod::Ppipp => {
            let lambda = match args.lambda {
                None | Some(LambdaArg::Auto) => None,
                Some(LambdaArg::Fixed(l)) => Some(l),
            };
            ppi_pp_mean(&data, lambda, &opts)
        }
    }
}

fn strata_of(table: &StudyTable, args: &StrataArgs) -> crate::Result<StratifiedStudy> {
    if table.has_strata() {
        table.stratified()
    } else {
        quantile_strata(&table.study(PoolKind::NestedCensus)?, args.bins)
    }
}

/// Pool sizes from the stratum row counts and dispersions from the labeled
/// residual standard deviation in each stratum.
pub fn allocate_from_table(table: &StudyTable, args: &AllocateArgs) -> crate::Result<AllocationOutput> {
    let study = strata_of(table, &args.strata)?;
    let mut inputs = Vec::new();
    for s in study.strata() {
        let residuals = s.data.residuals();
        if residuals.len() < 2 {
            return Err(Error::InvalidStudy(format!(
                "stratum {} needs at least 2 labeled pilot units to estimate its dispersion, found {}",
                s.id,
                residuals.len()
            )));
        }
        inputs.push((s.data.pool_size(), sample_variance(&residuals.values).sqrt()));
    }
    let plan = neyman_allocation(&inputs, args.budget, args.min_per_stratum)?;
    Ok(AllocationOutput {
        strata: study.strata().iter().map(|s| s.id.clone()).collect(),
        objective: plan.objective(),
        plan,
    })
}
