//! Sample-efficient black-box optimization over discrete predictive posteriors.
//!
//! The crate is organized bottom-up:
//!
//! - [`rng`], [`space`] and [`observations`]: deterministic sampling and the
//!   shared domain types every other module builds on.
//! - [`posterior`]: binned predictive distributions, their moments, and the two
//!   acquisition rules (closed-form Gaussian EI and exact discrete EI).
//! - [`fom`]: per-specification scoring and the scalar figure of merit.
//! - [`surrogate`]: the backend contract plus Gaussian-process,
//!   kernel-histogram and external-process implementations.
//! - [`circuits`]: analytic analog-circuit testbenches composed from
//!   exponential, power-law, rational and regime-switching primitives.
//! - [`optimizer`]: the sequential optimization loop, the three
//!   multi-specification strategies and a random-search baseline.

// `!(a < b)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuits;
pub mod error;
pub mod fom;
pub mod observations;
pub mod optimizer;
pub mod posterior;
pub mod rng;
pub mod space;
pub mod surrogate;

pub use error::{Error, Result};
pub use observations::ObservationSet;
pub use posterior::{DiscretePosterior, GaussianPosterior};
pub use rng::Rng;
pub use space::{DesignPoint, DesignSpace};
