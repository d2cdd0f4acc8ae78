// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod crossbar;
pub mod dataset;
pub mod device;
pub mod error;
pub mod mapping;
pub mod netmodel;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod tolerance;
