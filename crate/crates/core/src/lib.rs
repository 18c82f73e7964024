//! Continual-learning toolkit for CIR-fingerprint indoor localization.
//!
//! The crate ties together a synthetic multipath channel simulator
//! ([`channel`]), a small dense regressor with exact gradients ([`nn`]),
//! distance metrics and exact nearest-neighbor search ([`metrics`],
//! [`kdtree`]), exemplar-selection strategies ([`sampling`]), five
//! domain-incremental adaptation methods ([`dil`]), and an experiment
//! harness with CSV/JSON reporting ([`harness`]).

pub mod channel;
pub mod dil;
pub mod error;
pub mod harness;
pub mod kdtree;
pub mod metrics;
pub mod nn;
pub mod sampling;

pub use error::{Error, Result};
