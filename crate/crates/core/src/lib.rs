//! Numerical laboratory for harmonic measure and singular integrals on
//! point-cloud measures.
//!
//! The crate is organized around five subsystems:
//!
//! * [`measure`] — finite Radon measures as weighted point clouds, with
//!   growth, density, doubling, and thin-boundary diagnostics.
//! * [`lattice`] — David–Mattila-style dyadic partition hierarchies built on
//!   a point measure, plus Whitney decompositions of open sets.
//! * [`riesz`] — the n-dimensional Riesz kernel, truncated/maximal
//!   transforms, and discrete L² operator norms.
//! * [`harmonic`] — signed-distance domains, walk-on-spheres harmonic
//!   measure, Green function estimation, and pole-comparison checks.
//! * [`corona`] — good/bad cube classification, nice/ugly stopping-time
//!   trees, and the associated packing and transform checks.
//!
//! Everything is deterministic: stochastic routines take an explicit seed and
//! derive per-walk substreams from it, and all reductions use fixed orders.

pub mod corona;
pub mod generate;
pub mod geom;
pub mod harmonic;
pub mod lattice;
pub mod measure;
pub mod riesz;
pub mod rng;
pub mod stats;

pub use measure::{Ball, PointMeasure};
