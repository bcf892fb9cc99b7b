//! Federated learning across clients whose networks differ in depth and width.
//!
//! Client models are grown into a shared union architecture with
//! function-preserving transformations before averaging, and the averaged
//! model is trimmed back to each client's architecture before the next round.

pub mod cli;
pub mod data;
pub mod error;
pub mod federation;
pub mod netchange;
pub mod nn;
pub mod seed;

pub use error::{Error, IdxError, Result};
