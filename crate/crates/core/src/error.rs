use thiserror::Error;

/// Error type shared by every operation in this crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A linear solve hit a zero pivot or a pivot spread beyond the
    /// conditioning guard (1e12).
    #[error("singular or ill-conditioned matrix in {context}")]
    Singular { context: String },

    /// The sampled loop cannot be ordered: the plant output at sample k would
    /// need the control input computed at the same sample.
    #[error("algebraic loop: the plant must be strictly proper (the discretized controller has direct feedthrough)")]
    AlgebraicLoop,

    #[error("simulation diverged (non-finite state) at t = {time} s")]
    Divergence { time: f64 },

    #[error("time-domain describing-function run did not settle: {0}")]
    OracleUnsettled(String),

    #[error("base-linear closed loop is unstable ({0}); sensitivity-based tuning is undefined")]
    UnstableBaseLoop(String),

    #[error(
        "reference component at {omega} rad/s is not below the no-reset limit {omega_s} rad/s"
    )]
    GuaranteeVoid { omega: f64, omega_s: f64 },

    #[error("window out of range: {0}")]
    WindowOutOfRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
