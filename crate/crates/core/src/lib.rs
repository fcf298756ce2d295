//! Optimal portfolios for piecewise HARA utilities in a complete
//! Black-Scholes market.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod concavify;
pub mod error;
pub mod market;
pub mod normal;
pub mod phara;
pub mod rng;
pub mod root;
pub mod scenario;
pub mod solver;
pub mod verify;

pub use error::{PharaError, Result};
