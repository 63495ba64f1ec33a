//! Two-stage (filtration + base test) procedures for the composite mediation
//! null `γβ = 0`.
//!
//! The crate is organised bottom-up:
//!
//! * [`dist`] — normal and χ²₂ kernels plus counter-based random streams.
//! * [`estimators`] — per-hypothesis statistics (product, Sobel, p-values,
//!   Hodges and shrinkage estimators).
//! * [`twostage`] — filtration rules, the two-stage procedure and FWER bounds.
//! * [`asymptotics`] — parameter sequences, the K/L regime classifier and
//!   Monte-Carlo probes for rates, irregularity and MSE-ratios.
//! * [`simharness`] — mixture scenarios and the replication engine.
//! * [`ingest`] — OLS fitting of the two mediation regressions.

pub mod asymptotics;
pub mod dist;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod simharness;
pub mod twostage;

pub use error::{Error, Result};
