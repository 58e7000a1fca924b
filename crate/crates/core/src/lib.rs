// Negated float comparisons are how validation rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod centrality;
pub mod curriculum;
pub mod diffmath;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod graphstore;
pub mod losses;
pub mod par;
pub mod seeding;
pub mod synthdata;
pub mod trainer;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
