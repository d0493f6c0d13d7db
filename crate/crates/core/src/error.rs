use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    Specification(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate bandwidth {bandwidth}: observation {observation} has no grid point in its kernel support")]
    DegenerateBandwidth { observation: usize, bandwidth: f64 },

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("non-finite value in {quantity} at {location}")]
    Numeric { quantity: &'static str, location: String },

    #[error("inner backfitting iteration is not contracting (last ratios {ratios:?})")]
    InnerDivergence { ratios: Vec<f64> },

    #[error("Newton iteration diverged: {0}")]
    NewtonDivergence(String),

    #[error("bias system iteration failed: {0}")]
    BiasSystem(String),

    #[error("bandwidth selection failed: {0}")]
    Selection(String),

    #[error("metric computation failed: {0}")]
    Metric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
