//! Risk-limiting financial audits: sampling, betting confidence sequences
//! and audit sessions over weighted transaction populations.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confseq;
pub mod engine;
pub mod error;
pub mod martingale;
pub mod population;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod simulator;

pub use confseq::{CsFamily, Interval};
pub use error::{AuditError, Result};
pub use sampling::Strategy;
pub use scalar::Scalar;

pub type Population = population::Population<f64>;
pub type AuditSession = engine::AuditSession<f64>;
pub type SessionConfig = engine::SessionConfig<f64>;
pub type NullGrid = martingale::NullGrid<f64>;
pub type Distribution = sampling::Distribution<f64>;
