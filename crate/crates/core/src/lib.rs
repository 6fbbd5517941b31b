//! Isolines of equal bivariate joint-exceedance probability.
//!
//! A base isoline `{x : P(X1 > x1, X2 > x2) = p_base}` is estimated
//! nonparametrically from a kernel-smoothed survival surface, moved to
//! unit-Fréchet margins, and projected to smaller probabilities with the
//! scaling laws of regular variation:
//!
//! - asymptotic dependence: every vertex is multiplied by `s = p_base / p`;
//! - asymptotic independence: each coordinate is multiplied by
//!   `s^eta_i(z)`, where the exponent moves smoothly from the coefficient of
//!   tail dependence in the interior to 1 on the axes.
//!
//! The projected lines are mapped back to the original units through the
//! inverse marginal transform. [`diagnose`] checks lines against
//! empirical exceedance counts and produces block-bootstrap replicates.
//!
//! Module layout follows the pipeline:
//! [`ingest`] → [`marginal`] → [`surface`] → [`taildep`] → [`project`] →
//! [`diagnose`], with [`pipeline`] gluing them together and [`synth`]
//! supplying simulated data with known tail behaviour.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnose;
pub mod error;
pub mod ingest;
pub mod marginal;
pub mod pipeline;
pub mod project;
pub mod stats;
pub mod surface;
pub mod synth;
pub mod taildep;

pub use error::{Error, Result};
pub use ingest::{BivariateSample, IngestReport, Orientation, Scale, TimeIndex};
pub use marginal::{GpdFit, MarginalTransform};
pub use pipeline::{PipelineConfig, PipelineOutput};
pub use project::{ProjectionConfig, ProjectionMode, ScalingExponents};
pub use surface::{Isoline, Provenance, SurvivalGrid};
pub use taildep::{ChiCurve, TailDependenceEstimate};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
