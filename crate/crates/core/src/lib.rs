//! Random-effects meta-analysis of the difference of standardized means
//! (DSM), `Δ = μ_T/σ_T − μ_C/σ_C`.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: special functions, distributions, seeded random streams
//!   and scalar solvers.
//! * [`quadform`]: distribution of `Σ λᵢ χ²₁` via a Ruben mixture series,
//!   with characteristic-function inversion as a fallback.
//! * [`effects`]: per-arm standardized means and per-study DSM.
//! * [`heterogeneity`]: Cochran's Q under inverse-variance and
//!   effective-sample-size weights and the two heterogeneity tests.
//! * [`tau2`]: point and interval estimators of the between-study variance.
//! * [`pooling`]: point and interval estimators of the overall effect.
//! * [`simulation`]: the factorial Monte Carlo study.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod effects;
pub mod error;
pub mod heterogeneity;
pub mod numerics;
pub mod pooling;
pub mod quadform;
pub mod simulation;
pub mod tau2;

pub use effects::{study_dsm, ArmSummary, MomentPair, StudyDsm};
pub use error::{Error, Result};
pub use heterogeneity::{het_test, HetTest, QApproximation, QResult, WeightScheme};
pub use pooling::{EffectEstimate, EffectInterval, EffectIntervalMethod, EffectMethod};
pub use quadform::QuadFormSpec;
pub use simulation::{run_cell, run_grid, CellMetrics, SimulationCell, StudySizes};
pub use tau2::{Tau2Estimate, Tau2Interval, Tau2IntervalMethod, Tau2Method};
