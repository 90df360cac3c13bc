use thiserror::Error;

/// Errors raised anywhere in the testbed pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("correlation matrix is not positive definite: leading minor {minor} has pivot {pivot:.3e}")]
    NotPositiveDefinite { minor: usize, pivot: f64 },

    #[error("design is collinear: {0}")]
    Collinear(String),

    #[error("rescaling failed after {iterations} iterations: treated fraction {treated_fraction:.4} (target {target:.4}), in-band fraction {in_band:.4}")]
    Rescale {
        iterations: usize,
        treated_fraction: f64,
        target: f64,
        in_band: f64,
    },

    #[error("degenerate response surface: {0}")]
    DegenerateResponse(String),

    #[error("no treated units")]
    NoTreated,

    #[error("logistic regression failed: {0}")]
    Logistic(String),

    #[error("sinkhorn did not converge after {iterations} iterations (marginal error {marginal_error:.3e})")]
    Sinkhorn { iterations: usize, marginal_error: f64 },

    #[error("entropy balancing did not converge after {iterations} iterations (max violation {max_violation:.3e})")]
    BalanceNonConvergence { iterations: usize, max_violation: f64 },

    #[error("balance infeasible: column {column} cannot be matched (violation {violation:.3e})")]
    BalanceInfeasible { column: String, violation: f64 },

    #[error("missing individual effects: {0}")]
    MissingEffects(String),

    #[error("bootstrap failed in {failed} of {total} resamples")]
    Bootstrap { failed: usize, total: usize },

    #[error("unjoined estimate rows: {0:?}")]
    Orphans(Vec<String>),

    #[error("unknown method '{name}'; registered methods: {registered}")]
    UnknownMethod { name: String, registered: String },

    #[error("setting out of range 1..77: {0}")]
    SettingOutOfRange(usize),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
