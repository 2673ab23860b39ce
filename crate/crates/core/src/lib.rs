#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Operators built from Boas-Buck generating-function systems.

pub mod bbsystem;
pub mod catalog;
pub mod error;
pub mod lab;
pub mod moments;
pub mod operators;
pub mod series;
pub mod smoothness;
pub mod special;

pub use bbsystem::BoasBuckSystem;
pub use error::{Error, Result};
pub use series::TruncatedSeries;
