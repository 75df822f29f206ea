use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown asset: {0}")]
    UnknownAsset(String),

    #[error("no overlapping dates across requested assets")]
    NoOverlappingDates,

    #[error("invalid price for {ticker} on {date}: {price}")]
    InvalidPrice {
        ticker: String,
        date: String,
        price: f64,
    },

    #[error("duplicate row for {ticker} on {date}")]
    DuplicateRow { ticker: String, date: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("insufficient history: need {needed} observations, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("asset mismatch")]
    AssetMismatch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// `fallback` tells the caller that a fallback estimator should be used.
    #[error("dcc fit failed: {reason}")]
    DccFitFailed { reason: String, fallback: bool },

    #[error("degenerate variance for asset {asset}")]
    DegenerateVariance { asset: usize },

    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("insufficient assets: need at least {needed}, have {available}")]
    InsufficientAssets { needed: usize, available: usize },

    #[error("feature assembly failed: {0}")]
    FeatureAssemblyFailed(String),

    #[error("degenerate sharpe: zero standard deviation")]
    DegenerateSharpe,

    #[error("insufficient training data: need {needed} examples, have {available}")]
    InsufficientTrainingData { needed: usize, available: usize },

    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),

    #[error("invalid prediction: {0}")]
    InvalidPrediction(f64),

    #[error("invalid budget: {0}")]
    InvalidBudget(usize),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("insufficient sample: need at least {needed} universes, have {available}")]
    InsufficientSample { needed: usize, available: usize },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line() as u64,
            message: e.to_string(),
        }
    }
}
