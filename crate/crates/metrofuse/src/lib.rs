//! Linear-optics simulation of photonic entanglement fusion, heralding, and
//! distribution over a lossy metropolitan fiber network.
//!
//! The crate splits into analytic and stochastic halves. [`fock`], [`optics`],
//! [`source`], [`protocol`], and [`netmodel`] compute exact states, probabilities,
//! and rate budgets; [`montecarlo`] samples time-tagged detector records from the
//! same models; [`config`] and [`runner`] bind both behind declarative TOML
//! experiment descriptions. See the examples directory for guided entry points.

// Validation guards are written `!(x >= 0.0)` on purpose: the negated form is
// also true for NaN, which a plain `x < 0.0` would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod fock;
pub mod montecarlo;
pub mod netmodel;
pub mod optics;
pub mod protocol;
pub mod runner;
pub mod source;

pub use fock::{BasisKet, FockError, Mode, Polarization, PureState, SlotKey};
