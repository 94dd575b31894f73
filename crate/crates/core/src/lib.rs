//! Minimal solvers for the absolute pose of a pinhole camera relative to a
//! calibrated multi-camera rig from five plane-induced point matches.

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod elim;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod poly;
pub mod robust;
pub mod solvers;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
