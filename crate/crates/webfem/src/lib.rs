//! Mesh-free Galerkin solver built on weighted extended B-splines
//! (WEB-splines).
//!
//! The crate discretizes non-cooperative coupled elliptic systems with mixed
//! Dirichlet/Neumann/Robin boundary conditions on implicitly described
//! domains. Uniform tensor-product B-splines on a background grid are
//! stabilized by extending outer splines into inner ones and multiplied by a
//! weight function that vanishes on the Dirichlet boundary, so no boundary
//! fitted mesh is ever generated. On top of the solver sit computable
//! two-sided a posteriori error bounds: a functional majorant driven by a
//! reconstructed flux, and an energy-gap minorant.
//!
//! Modules follow the pipeline:
//!
//! * [`bspline`] — cardinal B-splines and tensor-product translates
//! * [`domain`] — implicit domains, boundary parts, weight functions
//! * [`grid`] — cell classification and inner/outer index sets
//! * [`web`] — extension coefficients and the weighted extended basis
//! * [`quadrature`] — interior, cut-cell and boundary-curve rules
//! * [`problem`] / [`presets`] — coefficient data and built-in problems
//! * [`assembly`] — the block Galerkin system
//! * [`solver`] — SSOR-preconditioned CG with indefinite fallbacks
//! * [`estimator`] — residual measure and two-sided error bounds
//! * [`cli`] — the command-line driver

// Index loops over small fixed-dimension arrays read better than iterator
// chains in the tensor arithmetic below.
#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod bspline;
pub mod cli;
pub mod domain;
pub mod estimator;
pub mod grid;
pub mod presets;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod util;
pub mod web;
pub mod weight;

pub use bspline::{GridSpec, MultiIndex, SplineOrder, UniformBsplineBasis};
pub use domain::{BoundaryPart, DomainModel};
pub use weight::WeightFunction;
