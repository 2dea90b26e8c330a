//! Sampling-interval certificates for sampled-data state feedback of LTI
//! plants that are known only through noisy input-state measurements.
//!
//! The crate is `no_std` (with `alloc`). It covers:
//!
//! - [`system`]: continuous-time plants, exact zero-order-hold simulation and
//!   experiment data generation,
//! - [`deriv`]: Euler derivative estimates with certified error bounds,
//! - [`consistency`]: the data-dependent quadratic description of every plant
//!   consistent with the data, its inertia checks and its dual multiplier,
//! - [`lmi`]: affine matrix-inequality problems for the model-based,
//!   data-driven analysis and data-driven design conditions,
//! - [`sdp`]: the feasibility-oracle contract and independent witness checks,
//! - [`search`]: bisection over the sampling bound and the alternating
//!   analysis/design iteration.
//!
//! Solving the semidefinite programs is delegated to an [`sdp::SdpOracle`]
//! implementation supplied by the caller.
#![no_std]
#![warn(missing_debug_implementations)]
// negated comparisons send NaN to the failing branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod consistency;
pub mod deriv;
pub mod linalg;
pub mod lmi;
pub mod sdp;
pub mod search;
pub mod system;

pub use consistency::{ConsistencySet, DataSet, NoiseBound};
pub use lmi::{AnalysisCertificate, DesignCertificate, LmiProblem};
pub use sdp::{FeasibilityResult, FeasibilityStatus, SdpOracle};
pub use search::{BisectionConfig, IterationSchedule};
pub use system::{FeedbackGain, LtiSystem, SamplingSequence, Trajectory};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
