//! Numerical laboratory for Ricci DeTurck flow of perturbations of the
//! Euclidean metric on a periodic box.

pub mod cli_io;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod harnack;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
