//! G-formula identification of treatment effects in two-session
//! sequential experiments with carry-over.
//!
//! The library provides:
//!
//! - [`dataset`]: domain types and the immutable `(a0, l1, a1, y)`
//!   dataset container, with a stable CSV format.
//! - [`learners`]: conditional outcome models — empirical PMF tables and
//!   per-treatment-arm Gaussian regressions (the T-learner composition).
//! - [`gformula`]: plug-in and Monte Carlo evaluation of the G-formula
//!   standardization, composing the fitted models into effect estimates.
//! - [`baselines`]: the naive final-session estimators the G-formula
//!   corrects, kept executable for comparison.
//! - [`dgp`]: a structural-causal-model simulator with analytic ground
//!   truth for main effects, carry-over, mediation, and confounding.
//! - [`diagnostics`]: positivity checks and the g-null paradox sweep.
//! - [`bench`]: a seeded, paired replication harness comparing estimator
//!   MSE across scenarios.
//!
//! All randomness flows from explicit 64-bit seeds through keyed
//! substreams ([`rng`]), so every result is bit-reproducible regardless
//! of worker parallelism.

pub mod baselines;
pub mod bench;
pub mod dataset;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod gformula;
pub mod learners;
pub mod rng;

pub use dataset::{Dataset, EstimandSpec, OutcomeValue, Support, TreatmentPath, Unit};
pub use error::{Error, Result};
