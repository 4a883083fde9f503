//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by model construction, network analysis, codec stepping,
/// gain selection and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Oscillator order outside the supported range.
    #[error("order parameter m must satisfy 1 <= m <= {max}, got {m}")]
    OrderOutOfRange { m: usize, max: usize },

    /// Rotation angle too close to a multiple of pi: the observability
    /// construction divides by sin(theta).
    #[error("rotation angle {theta} is degenerate: |sin(theta)| = {sin_abs:e} < {min:e}")]
    DegenerateAngle { theta: f64, sin_abs: f64, min: f64 },

    /// A quantizer or schedule parameter was invalid.
    #[error("invalid quantizer configuration: {0}")]
    InvalidQuantizer(String),

    /// Network weights violated a structural requirement.
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    /// Reachability and spectral connectivity tests disagreed; indicates a
    /// numerically borderline Laplacian spectrum.
    #[error("connectivity tests disagree: reachability says {reachable}, spectral zero count is {zero_count}")]
    ConnectivityMismatch { reachable: bool, zero_count: usize },

    /// The topology cannot be used with the requested oscillator order.
    #[error("unsupported topology for m = {m}: {reason}")]
    UnsupportedTopology { m: usize, reason: String },

    /// Codec steps must be fed consecutive time indices.
    #[error("codec step out of order: expected t = {expected}, got {got}")]
    StepOutOfOrder { expected: usize, got: usize },

    /// Parameter selection could not find a feasible operating point.
    #[error("no feasible tuning found: {0}")]
    Infeasible(String),

    /// State grew beyond representable range during simulation.
    #[error("numeric overflow at t = {t}: {what} is not finite")]
    Overflow { t: usize, what: String },

    /// Exact integer combinatorics exceeded i64 range.
    #[error("combinatorial overflow: C({n}, {k}) exceeds i64")]
    CombinatoricOverflow { n: u32, k: u32 },

    /// A config value failed validation.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A linear solve met a numerically singular matrix.
    #[error("singular linear system in {context}")]
    SingularSystem { context: &'static str },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
