//! Orthant-truncated multivariate normal laws.
//!
//! The crate measures the *mass-shifting* behaviour of N_C(0, Σ) with
//! C = [0, ∞)^N — the marginals of a truncated Gaussian with a banded,
//! nonnegatively correlated scale matrix drift away from the origin as the
//! bandwidth grows — and the consequence for Bayesian monotone regression with
//! truncated-normal priors, together with the global-local shrinkage remedy.
//!
//! Deterministic matrix and basis code is generic over [`Scalar`] (`f32` or
//! `f64`); Monte Carlo engines and samplers work in `f64`.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod gaussprob;
pub mod io;
pub mod linalg;
pub mod massshift;
pub mod matrices;
pub mod normal;
pub mod quad;
pub mod regress;
pub mod rng;
pub mod scalar;
pub mod tmvn;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type Matrix32 = nalgebra::DMatrix<f32>;
pub type Vector32 = nalgebra::DVector<f32>;

pub type CompoundSymmetry = matrices::CompoundSymmetry<f64>;
pub type CorrelationBand = matrices::CorrelationBand<f64>;
pub type CorrelationBand32 = matrices::CorrelationBand<f32>;
pub type BandStats = matrices::BandStats<f64>;
pub type NeumannApprox = matrices::NeumannApprox<f64>;
pub type BasisGrid = basis::BasisGrid<f64>;
pub type BasisGrid32 = basis::BasisGrid<f32>;
pub type MaternParams = basis::MaternParams<f64>;

pub use gaussprob::{Method, ProbEstimate, Rectangle};
pub use tmvn::TruncatedMVN;
