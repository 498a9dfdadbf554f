//! Numerical laboratory for swirling stream-tube fields and De Giorgi
//! truncation energies.
//!
//! The crate is split by concern:
//!
//! - [`geometry`]: streamlines, cylindrical frames, direction decomposition and
//!   bundle diagnostics for any [`VectorField`].
//! - [`fields`]: the swirl profile and the exactly divergence-free tube field.
//! - [`norms`]: cylindrical quadrature, truncated `L^p` norms, the weak-`L^p`
//!   estimator and annulus partial sums.
//! - [`degiorgi`]: truncation levels, energies and the inequality checkers.
//! - [`analysis`]: the recurrence threshold and exponent feasibility.
//!
//! The guide chapters under `book/` are compiled here as doc-tests.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod degiorgi;
pub mod export;
pub mod fields;
pub mod geometry;
pub mod norms;

pub use geometry::{Point3, VectorField};

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod guide_introduction {}
#[doc = include_str!("../../../book/src/tube.md")]
pub mod guide_tube {}
#[doc = include_str!("../../../book/src/norms.md")]
pub mod guide_norms {}
#[doc = include_str!("../../../book/src/degiorgi.md")]
pub mod guide_degiorgi {}
#[doc = include_str!("../../../book/src/recurrence.md")]
pub mod guide_recurrence {}
