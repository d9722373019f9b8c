use thiserror::Error;

/// Errors raised by the simulator and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("derivative order {order} exceeds the configured maximum {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("axis {0} is not valid for this field")]
    InvalidAxis(usize),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    /// The flattening map degenerated: the Jacobian dropped below the floor.
    #[error("domain collapse: min J = {min_jacobian:.6e} < {floor} (node {node:?})")]
    DomainCollapse {
        min_jacobian: f64,
        floor: f64,
        node: (usize, usize, usize),
    },

    #[error("singular mode system at horizontal mode ({m1}, {m2})")]
    SingularMode { m1: i64, m2: i64 },

    #[error("incompatible data: {0}")]
    Incompatible(String),

    #[error("insufficient history: need {needed} snapshots, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("non-uniform snapshot spacing (relative deviation {0:.3e})")]
    NonUniformSpacing(f64),

    #[error("solver produced NaN/Inf; last good time t = {last_good_time}")]
    Blowup { last_good_time: f64 },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
