#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod cli;
pub mod cylindrical;
pub mod darboux1d;
pub mod error;
pub mod factorops;
pub mod grid;
pub mod moutard2d;
pub mod operator;
pub mod spectra;
pub mod superalgebra;

pub use error::{Error, Result};
