//! Consumption-investment with a wealth-dependent borrowing cap: HJB solver,
//! dual transform, free-boundary certification, feedback policy and a
//! Monte Carlo cross-check.

// `!(a > b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod dual;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod policy;
pub mod reference;
pub mod region;

pub use error::{Error, Result};
