//! Module-wise (greedy) training of residual networks with a transport
//! penalty on each module's displacement, plus the numerical tools to check
//! it: a small reverse-mode autodiff core, exact discrete optimal transport,
//! a particle minimizing-movement oracle, and an experiment harness.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod greedy;
pub mod multiplier;
pub mod net;
pub mod ot;
pub mod report;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
