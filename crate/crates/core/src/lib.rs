//! Asynchronous SGD with filter partitions, a delay simulator, and the
//! bounds and step-size integrals used to compare them.

// Guards are written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod engine;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod partition;
pub mod schedules;
pub mod theory;

pub use error::{Error, Result};
