//! Solution operators of fully nonlocal telegraph equations driven by
//! completely positive memory kernels.
//!
//! The crate is organised bottom-up: [`kernel`] defines creep pairs,
//! [`volterra`] solves relaxation equations, [`subordination`] builds the
//! subordinate kernel and its moments, [`multipliers`] tabulates the
//! propagator symbols, [`field`] evolves fields on a periodic grid,
//! [`randomizer`] randomises data and [`estimates`] computes exponents and
//! decay probes.

pub mod error;
pub mod estimates;
pub mod field;
pub mod grid;
pub mod kernel;
pub mod moments;
pub mod multipliers;
pub mod quad;
pub mod randomizer;
pub mod subordination;
pub mod talbot;
pub mod volterra;

pub use error::{Error, Result};
pub use grid::{GridMode, TimeGrid};
