//! Gibbs sampler over weights, indicators, variances and the delay index.

pub mod chain;
pub mod conditionals;
pub mod hyper;
pub mod linalg;
pub mod tau;

pub use chain::{init, regression_rows, run_chain, ChainRecord, IterationRecord, SamplerConfig, SamplerState, SearchWindow};
pub use hyper::Hyperparameters;
pub use linalg::{log_marginal_likelihood, GaussianPosteriorParams, RegressionStats};
pub use tau::{TauUpdate, Window};
