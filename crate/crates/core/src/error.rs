use alloc::string::String;
use alloc::vec::Vec;

/// Standing assumptions on a CARMA model, checked at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// All zeros of `det P(z)` lie in the open left half-plane.
    Stationarity,
    /// `m <= d`, `B_q` and `B_qᵀB_0` have full rank `m`, and all zeros of
    /// `det(B_q^{~1} Q(z))` lie in the open left half-plane.
    Invertibility,
}

impl core::fmt::Display for Assumption {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Assumption::Stationarity => f.write_str("stationarity (autoregressive polynomial)"),
            Assumption::Invertibility => f.write_str("invertibility (moving-average polynomial)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix polynomial is singular at z = {re} + {im}i")]
    SingularAt { re: f64, im: f64 },

    #[error("eigenvalue solver did not converge")]
    EigenSolver,

    #[error("matrix is rank deficient: numerical rank {rank}, required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("model violates the {assumption} assumption: {detail}")]
    AssumptionViolated {
        assumption: Assumption,
        detail: String,
    },

    #[error("sampling grid mismatch: {0}")]
    Grid(String),

    #[error("not enough samples: index {needed} required but only {available} available")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("simulation produced a non-finite state at step {step}")]
    Blowup { step: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error(
        "optimizer did not converge after {restarts} restarts \
         (best criterion {best_value:e} at {best_theta:?})"
    )]
    NonConvergence {
        best_theta: Vec<f64>,
        best_value: f64,
        iterations: usize,
        restarts: usize,
    },

    #[error(
        "estimated moment covariance is singular ({below_floor} eigenvalues below the floor, \
         at most {allowed} tolerated); use more data or fewer moment conditions"
    )]
    SingularMomentCovariance { below_floor: usize, allowed: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
