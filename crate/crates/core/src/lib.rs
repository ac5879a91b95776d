//! One-shot quantum capacity bounds for finite-dimensional channels.
//!
//! All logarithms are base 2; every entropic quantity is reported in bits.

pub mod capacity;
pub mod channel;
pub mod codec;
pub mod coding;
pub mod entropy;
pub mod error;
pub mod qmatrix;
pub mod sampling;
pub mod smoothing;
pub mod spectrum;

pub use error::{QcapError, Result};
