use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate sample: need at least {needed} labeled units, found {found}")]
    DegenerateSample { needed: usize, found: usize },

    #[error("no labeled units{}", fmt_context(.context))]
    NoLabels { context: Option<String> },

    #[error("labeled predictions are constant; the regression slope is undefined (use lambda = 0)")]
    ConstantPredictions,

    #[error("variance mode {requested} is not valid for a {pool} pool")]
    WrongMode {
        requested: &'static str,
        pool: &'static str,
    },

    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    InvalidLevel(f64),

    #[error("variance must be finite and nonnegative, got {0}")]
    InvalidVariance(f64),

    #[error("labeling fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),

    #[error("budget {budget} is infeasible: allocations must total between {minimum} and {maximum}")]
    InfeasibleBudget {
        budget: usize,
        minimum: usize,
        maximum: usize,
    },

    #[error("labeled outcomes have zero variance")]
    ZeroOutcomeVariance,

    #[error("labeled unit {unit} has no group assignment")]
    InvalidGrouping { unit: usize },

    #[error("invalid study: {0}")]
    InvalidStudy(String),

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_context(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" in {c}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn no_labels() -> Self {
        Error::NoLabels { context: None }
    }

    pub(crate) fn no_labels_in(context: impl Into<String>) -> Self {
        Error::NoLabels {
            context: Some(context.into()),
        }
    }
}
