//! Driven electron spin coupled to nuclear spins: power-limited polarization
//! and sensing protocols, Ornstein–Uhlenbeck noise and Monte-Carlo averaging.
//!
//! Units: angular frequency in rad/μs, time in μs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod noise;
pub mod power;
pub mod propagator;
pub mod protocols;
pub mod spin;

pub use error::{Error, Result};
