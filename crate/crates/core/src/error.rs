use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no observations")]
    NoObservations,

    #[error("unparseable dates in rows {rows:?}")]
    UnparseableDates { rows: Vec<usize> },

    #[error("cpi has no value for month {month}")]
    MissingCpiMonth { month: String },

    #[error("series {series} has {observed} observed values, need at least {required}")]
    TooFewObservations {
        series: String,
        observed: usize,
        required: usize,
    },

    #[error("non-positive value {value} at {stamp} in series {series}")]
    NonPositiveValue {
        stamp: String,
        series: String,
        value: f64,
    },

    #[error("unknown period `{0}`")]
    UnknownPeriod(String),

    #[error("unknown series `{0}`")]
    UnknownSeries(String),

    #[error("series too short: length {len}, need more than {required}")]
    SeriesTooShort { len: usize, required: usize },

    #[error("zero variance")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coordinate descent did not converge: equation {equation}, max coefficient change {gap:e} after {sweeps} sweeps")]
    NonConvergence {
        equation: usize,
        gap: f64,
        sweeps: usize,
    },

    #[error("insufficient folds: {0}")]
    InsufficientFolds(String),

    #[error("effective rank undefined for zero matrix")]
    ZeroMatrix,

    #[error("empty shock subset")]
    EmptyScenario,

    #[error("degenerate shock sub-covariance for subset {subset:?}")]
    DegenerateShock { subset: Vec<String> },

    #[error("{dropped} of {total} bootstrap replicates failed")]
    TooManyDroppedReplicates { dropped: usize, total: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error once all context layers are stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
