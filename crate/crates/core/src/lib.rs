//! Area minimization of triply periodic surfaces under a volume-fraction
//! constraint, using a level-set representation on a periodic unit cell.
//!
//! The surface is the zero set of an embedding function `φ`; phase 1 is
//! `φ < 0`. Steepest descent on the Lagrangian `A + λ (f - f₀)` moves the
//! surface with normal speed `-(∇·n + λ)`, a Newton corrector on the
//! multiplier restores the volume fraction when it drifts, and periodic
//! reinitialization keeps `φ` distance-like.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraint;
pub mod error;
pub mod fieldfile;
pub mod grid;
pub mod initializers;
pub mod mesh;
pub mod metrics;
pub mod optimizer;
pub mod reinit;
pub mod sweep;

pub use error::{Error, Result};
pub use grid::{PeriodicGrid, ScalarField};
pub use metrics::{SmoothingParams, SurfaceMetrics};
