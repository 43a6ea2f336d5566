use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("density integrates to {mass}, outside 1 ± {tolerance}")]
    NonNormalized { mass: f64, tolerance: f64 },

    #[error("negative density {value} at x = {at}")]
    NegativeDensity { at: f64, value: f64 },

    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),

    #[error("integral did not converge: estimate {estimate}, error {error} > tolerance {tolerance}")]
    DivergentIntegral {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least 4 quotes, got {got}")]
    InsufficientQuotes { got: usize },

    #[error("quotes cannot be repaired: {reason}")]
    UnrepairableQuotes { reason: String },

    #[error("strike {strike} outside the curve domain")]
    OutOfDomain { strike: f64 },

    #[error("zero-strike slope {slope} gives a discount factor outside (0, 1]")]
    SlopeOutOfRange { slope: f64 },

    #[error("negative zero-strike mass {value}: external rate inconsistent with the curve")]
    NegativeMass { value: f64 },

    #[error("target density vanishes at K({x}) = {k} while the source density is positive")]
    TargetDensityVanishes { x: f64, k: f64 },

    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("density is not unimodal ({modes} local maxima)")]
    NotUnimodal { modes: usize },

    #[error("cash flow has zero variance")]
    ZeroVariance,

    #[error("state price density is unbounded on its domain")]
    UnboundedQ,

    #[error("measures are not equivalent: {0}")]
    NotEquivalent(String),

    #[error("partition count must be at least 2, got {0}")]
    InvalidPartition(usize),

    #[error("inconsistent market context: {0}")]
    InconsistentContext(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by unreadable or malformed inputs rather than
    /// by the numbers they contain.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
