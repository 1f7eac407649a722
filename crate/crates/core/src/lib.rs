//! Exact constructions of low-dimensional support-rank and sign-rank
//! representations for Hamming-distance matrices and rank problems, with
//! exhaustive verification against brute-force ground truth.
//!
//! Nothing here uses floating point. Every claimed representation is checked
//! pair by pair with arbitrary-precision integers.

pub mod compression;
pub mod error;
pub mod exact;
pub mod hamming;
pub mod rankprob;
pub mod seed;
pub mod signcompile;
pub mod support;
pub mod veronese;

pub use error::{Error, Result};
pub use exact::{ExactInt, ExactMat, ExactRat};
pub use support::{SupportOracle, SupportReport, VerifyMode};
