use thiserror::Error;

/// Errors produced by the model, the closed-form evaluator and the optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("dark-count probability {value} exceeds 1 for efficiency {eta} (nonphysical regime)")]
    NonphysicalDark { eta: f64, value: f64 },

    #[error("photon cutoff {n_max} exceeds the supported arithmetic range (max {limit})")]
    CutoffTooLarge { n_max: u32, limit: u32 },

    #[error("exact integer arithmetic overflowed in {0}")]
    Overflow(&'static str),

    #[error("conditioning event has zero probability at cutoff {n_max}")]
    ZeroProbability { n_max: u32 },

    #[error("visibility undefined: max + min coincidences underflow to zero")]
    VisibilityUndefined,

    #[error("pattern or outcome does not match a chain with {stations} station(s): {reason}")]
    Shape { stations: u32, reason: String },

    #[error("station outcome violates the post-selection rule: {0}")]
    NotPostSelected(String),

    #[error("bracket [{lo}, {hi}] km does not straddle the feasibility boundary")]
    BadBracket { lo: f64, hi: f64 },

    #[error("oracle supports a single swapping setup only (got {0})")]
    OracleDimension(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
