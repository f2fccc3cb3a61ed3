//! Monte Carlo simulation and limit analysis for searches for Pauli-forbidden
//! X-ray transitions in copper conductors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod parallel;
pub mod physics;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
