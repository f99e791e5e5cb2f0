//! Lévy-driven multivariate CARMA processes.
//!
//! The crate covers the full pipeline from model to estimate:
//!
//! * [`matpoly`]: matrix polynomials, block companion matrices and their
//!   resolvents, stability tests, left inverses and the matrix exponential.
//! * [`levy`]: parametric Lévy processes, increment samplers, characteristic
//!   triplets and Gamma-distribution analytics.
//! * [`carma`]: controller-canonical state-space models, Euler simulation and
//!   grid sampling.
//! * [`recovery`]: forward differences, the trapezoidal rule and the
//!   reconstruction of the driving process's unit increments from a sampled
//!   path.
//! * [`gmm`]: generalized method of moments estimation with two-stage optimal
//!   weighting.
//!
//! The crate is `no_std` and only needs an allocator. Randomness always comes
//! from a caller-owned [`rand::Rng`].

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod carma;
pub mod error;
pub mod gmm;
pub mod levy;
pub mod matpoly;
pub mod optim;
pub mod recovery;
pub mod special;
pub mod stats;

pub use carma::{
    build_state_space, sample, simulate, transfer_identity_check, CarmaModel, FinePath,
    SampledSeries, SimulationOptions, StateSpaceRealization,
};
pub use error::{Assumption, Error, Result};
pub use gmm::{
    asymptotic_covariance, estimate_from_observations, gmm_estimate, two_stage_estimate,
    CharFnMatching, GammaFamily, GammaScore, GmmOptions, GmmResult, MomentFunction,
    ObservationEstimate, ParamDomain, ParametricFamily,
};
pub use levy::{CharacteristicTriplet, IncrementSample, JumpLaw, LevyMeasure, LevySpec};
pub use recovery::{recover_increments, RecoveryConfig, RecoveryOutput};

/// Re-exported so callers can build inputs without depending on nalgebra directly.
pub use nalgebra::{Complex, DMatrix, DVector};
