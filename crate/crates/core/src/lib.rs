//! Master equations and quantum filters for open systems driven by a
//! continuous-mode single-photon field or a superposition of coherent fields.
//!
//! Everything is propagated in the dual (density-matrix) picture: a functional
//! μ(X) or π(X) is stored as a matrix ρ with μ(X) = tr[ρX].
//!
//! * [`master_sp`] / [`filter_sp`] — single-photon master equation and filter,
//!   both as four coupled d×d equations and as one embedded 2d×2d system.
//! * [`zakai`] — unnormalized reference filter for the embedded system.
//! * [`cat`] — coherent-superposition master equation and filter.
//! * [`ensemble`] — parallel Monte-Carlo trajectories with fixed-order reduction.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cat;
pub mod config;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod filter_sp;
pub mod integrate;
pub mod master_sp;
pub mod model;
pub mod operators;
pub mod series;
#[doc(hidden)]
pub mod testing;
pub mod validation;
pub mod zakai;

pub use error::{Error, Result};
pub use integrate::Scheme;
pub use model::{CoherentModes, ExtendedConfig, Grid, Mode, ModeSet, Pulse, PulseShape, SystemModel};
pub use operators::{ExtendedOperator, Operator};

pub use num_complex::Complex64;

/// Version string embedded in emitted metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
