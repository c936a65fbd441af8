use thiserror::Error;

/// Errors produced anywhere in the estimator stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid index rule: {0}")]
    InvalidRule(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for {len} units")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("enumeration would visit {size} items, above the cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },

    #[error("conditional law is empty: {0}")]
    EmptyConditional(String),

    #[error("treated/control pair needs at least one treated and one control unit")]
    NoTreatedControlPair,

    #[error("kernel is not reversible: detailed-balance residual {residual:e}")]
    NotReversible { residual: f64 },

    #[error("spectral gap {0} is outside (0, 1]")]
    InvalidGap(f64),

    #[error("no closed-form spectral gap for this design and rule")]
    NoClosedForm,

    #[error("Jacobi sweep did not converge (off-diagonal norm {off_norm:e})")]
    NoConvergence { off_norm: f64 },

    #[error("degenerate realization: {0}")]
    Degenerate(String),

    #[error("every outcome unit was deleted")]
    AllDeleted,

    #[error("arm too small: {0}")]
    ArmTooSmall(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("UB_oracle increased from L={prev_l} ({prev:e}) to L={next_l} ({next:e})")]
    NotMonotone {
        prev_l: usize,
        prev: f64,
        next_l: usize,
        next: f64,
    },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
