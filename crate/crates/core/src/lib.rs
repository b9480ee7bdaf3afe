//! Two-sample testing on the SPD cone through Wishart kernel density
//! estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gram;
pub mod io;
pub mod kde;
pub mod oracles;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod spd;
pub mod special;
pub mod two_sample;
pub mod wishart;

pub use error::{Error, ErrorClass, Result};
pub use kde::Sample;
pub use spd::SpdMatrix;
pub use two_sample::{Bandwidths, Method, TestResult, TwoSampleData};
