//! Phase-field brittle fracture with ensemble Kalman data assimilation.
//!
//! The crate couples a micromorphic phase-field fracture solver (linear
//! finite elements, monolithic Newton with history extrapolation) with an
//! ensemble Kalman filter that assimilates sparse displacement measurements
//! and projects each analysis state back onto the model manifold through a
//! staggered regularization pass.
//!
//! The high-level entry points are [`filter::run_filter`] for assimilation
//! runs, [`model::run_load_stepping`] for deterministic forward runs, and the
//! `pfenkf` binary for the command-line workflow. The `book/` directory of
//! the repository contains a guide with runnable examples.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod filter;
pub mod io;
pub mod kernel;
pub mod material;
pub mod mesh;
pub mod model;
pub mod observation;
pub mod validate;

pub use error::{Error, Result};
