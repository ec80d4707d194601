#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::should_implement_trait)]

//! Diffusive molecular-communication link with a porous spheroidal receiver.

pub mod analytic;
pub mod cli;
pub mod model;
pub mod signal;
pub mod specfun;
pub mod pbs;
