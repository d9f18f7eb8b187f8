//! Auxiliary-mask pruning and dense-to-sparse incremental training on a
//! miniature recommendation model fed by a drifting synthetic click stream.

pub mod config;
pub mod d2s;
pub mod datastream;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod nn;
pub mod pruning;
pub mod runner;

pub use error::{Error, Result};
