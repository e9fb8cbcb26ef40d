use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid group spec: {0}")]
    InvalidSpec(String),

    #[error("malformed normal form: {0}")]
    MalformedElement(String),

    #[error("ball capacity exceeded: {entries} adjacency entries over cap {cap}")]
    CapacityExceeded { entries: u64, cap: u64 },

    #[error("point outside ball: {0}")]
    OutOfBall(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("divergence suspected (recurrent walk?): {0}")]
    Divergence(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("tail fit failed: {0}")]
    FitFailure(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("cylinder algebra error (raise depth): {0}")]
    Algebra(String),

    #[error("kernel pole: {0}")]
    Pole(String),
}

pub type Result<T> = std::result::Result<T, Error>;
