//! Causal discovery for sparse linear cyclic structural causal models with
//! hidden confounders.
pub mod bench;
pub mod ci;
pub mod cli;
pub mod error;
pub mod features;
pub mod graph;
pub mod io;
pub mod llc;
pub mod rng;
pub mod scm;
pub mod search;

pub use error::{Error, Result};
