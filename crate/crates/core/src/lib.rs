//! Bayesian inference for robust longitudinal envelope models.
//!
//! Multivariate repeated measures `Y_i` (r × J_i) are regressed on covariates
//! `X_i` (p × J_i) under an envelope structure `β = Γη`,
//! `Σ_ε = ΓΩΓᵀ + Γ₀Ω₀Γ₀ᵀ`, with matrix-t (or normal) errors and a CS/AR(1)
//! working correlation across time. Posterior sampling is Gibbs with
//! Metropolis-Hastings steps for the degrees of freedom, the correlation and
//! the envelope subspace, which lives on the Grassmann manifold.
//!
//! All numerical code is generic over [`Real`]; the `*64` aliases below are
//! the types most callers want.

// `!(x > 0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrstruct;
pub mod error;
pub mod grassmann;
pub mod inference;
pub mod linalg;
pub mod matvar;
pub mod model;
pub mod sampler;
pub mod scalar;
pub mod simgen;

pub use corrstruct::{CorrKind, CorrelationSpec};
pub use error::{Result, RolemError};
pub use grassmann::{EnvelopeBasis, Frame, Projection};
pub use model::{EnvelopeAssembly, ErrorModel, LongitudinalDataset, ParameterState, Subject};
pub use scalar::Real;

pub type Dataset64 = LongitudinalDataset<f64>;
pub type State64 = ParameterState<f64>;
pub type Projection64 = Projection<f64>;
pub type Dataset32 = LongitudinalDataset<f32>;
pub type State32 = ParameterState<f32>;
