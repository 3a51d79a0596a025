//! Discovery of constant-delay differential equations from noisy time
//! series with a discontinuous spike-and-slab Gibbs sampler that also
//! infers the delay index.

pub mod basis;
pub mod config;
pub mod dde;
pub mod error;
pub mod gibbs;
pub mod model;
pub mod pipeline;
pub mod posterior;
pub mod predictor;
pub mod signal;
pub mod term;
pub mod trajectory;

pub use error::{Error, Result};
