//! Gradient-free inversion of encoder-decoder operator pairs.
//!
//! Given an encoder `E: R^N -> R^F` and a decoder `D: R^F -> R^N`, the
//! library recovers the latent `z` behind a pixel-space target `x = D(z)`
//! using only forward evaluations of the residual operator
//! `T(z) = E(D(z)) - E(x)`. It ships the plain forward step method, the
//! inertial Krasnoselskii-Mann iteration, and an Adam update driven by the
//! residual in place of a gradient, next to gradient-based baselines for
//! comparison. Every convergence statement the iterations rely on
//! (cocoercivity descent, the inertial Lyapunov chain, the `min ||T y^k||`
//! rate bound) is exposed as a runtime-checkable inequality with numeric
//! slack, not just a boolean.
//!
//! Modules:
//! - [`operators`]: vectors, operator pairs, the residual operator, and the
//!   emulated binary16 evaluation mode.
//! - [`models`]: deterministic toy pairs (PCA-optimal linear, lossy-spectrum
//!   linear, fixed-weight MLP with analytic gradients).
//! - [`solvers`]: the five iteration schemes plus the cosine warm-up
//!   learning-rate schedule.
//! - [`diagnostics`]: NMSE, cocoercivity ratio scans, theorem reports,
//!   scatter export.
//! - [`watermark`]: frequency-domain ring watermark embedding and
//!   classification on 2-D latents.
//! - [`harness`]: JSON-configured experiment orchestration (Pareto
//!   benchmark, theorem suite, CSV/JSON persistence).

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod models;
pub mod operators;
pub mod solvers;
pub mod watermark;

pub use error::{FixinvError, Result};
pub use operators::{OperatorPair, PrecisionMode, ResidualOperator, Vector};
