// Negated float comparisons in this crate are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod digest;
pub mod engine;
pub mod guidelines;
pub mod orchestrator;
pub mod providers;
pub mod schema;
pub mod seed;
pub mod stages;
