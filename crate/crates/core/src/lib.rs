//! Exchangeable-pair Stein machinery and Monte Carlo verification of
//! non-uniform Berry-Esseen bounds for quadratic forms, the general
//! Curie-Weiss model and a sample-correlation independence statistic.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curieweiss;
pub mod error;
pub mod experiment;
pub mod indeptest;
pub mod limitdist;
pub mod mcengine;
pub mod paircore;
pub mod quadform;
pub mod steinsolve;

pub use error::{Error, Result};
