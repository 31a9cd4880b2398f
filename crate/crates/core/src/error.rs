use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),

    #[error("invalid adversary bound: 2f < n is required (n = {n}, f = {f})")]
    InvalidBound { n: usize, f: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("not a probit vector: {0}")]
    NotOnSimplex(String),

    #[error(
        "exhaustive subset check over C({n}, {size}) subsets exceeds the cap of n <= {cap}; \
         use the sampled robustness check instead"
    )]
    SubsetCap { n: usize, size: usize, cap: usize },

    #[error("aggregator {0} is not a static rule")]
    NotStatic(String),

    #[error("attack {0} is white-box and needs the clean aggregation output")]
    MissingOracle(&'static str),

    #[error(
        "the class-prior attack needs a K x K similarity matrix; \
         pass one with --similarity <file> or use a synthetic dataset"
    )]
    MissingSimilarity,

    #[error("non-finite gradient while attacking panel {0}")]
    AttackDiverged(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("no trained model supplied for aggregator {0}")]
    MissingModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid panel {id}: {msg}")]
    InvalidPanel { id: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation errors are caused by bad user input; everything else is a
    /// runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Json(_) | Error::AttackDiverged(_) | Error::Diverged { .. }
        )
    }
}
