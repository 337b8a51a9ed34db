//! Projected Milstein approximation of random periodic solutions for
//! semi-linear SDEs with time-periodic multiplicative noise.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod msq;
pub mod noise;
pub mod plot;
pub mod problem;
pub mod rps;
pub mod schemes;
pub mod stats;

pub use error::{Error, Result};
