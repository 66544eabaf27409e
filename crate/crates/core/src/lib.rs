//! # siagg — single-index regression by aggregation
//!
//! Estimates a multivariate regression function of single-index form
//! `g(x) = f(v·x)` without knowing either the direction `v` or the
//! smoothness of the univariate link `f`. The estimator aggregates a
//! dictionary of truncated local polynomial fits — one per candidate
//! `(direction, smoothness, radius)` triple drawn from a regular lattice
//! of the half unit-sphere and small parameter grids — using Gibbs
//! (exponential) weights computed from held-out squared error.
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`data`] — datasets, projections, sample splitting, parameter grids;
//! * [`lpe`] — the univariate local polynomial weak learner with its
//!   data-driven bandwidth;
//! * [`lattice`] — the half-sphere direction lattice;
//! * [`aggregation`] — dictionary fitting, Gibbs weighting, direction
//!   preselection and temperature cross-validation;
//! * [`simbench`] — synthetic benchmarks that measure MISE against the
//!   Gibbs temperature over many seeded replications;
//! * [`report`] — CSV/JSON emission of benchmark results.
//!
//! All randomness flows from a single root seed through named ChaCha
//! streams (see [`rng`]), so every run is bit-reproducible.

pub mod aggregation;
pub mod data;
pub mod error;
pub mod lattice;
pub mod lpe;
pub mod report;
pub mod rng;
pub mod simbench;

pub use error::{Error, Result};
