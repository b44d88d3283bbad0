//! Sequential search for a change-point anomaly among `M` processes under a
//! composite hypothesis model.
//!
//! - [`model`]: observation families, the parameter grid and MLEs.
//! - [`environment`]: ground-truth simulator with keyed random streams.
//! - [`policy`]: the explore/exploit/test search policy.
//! - [`baselines`]: round-robin CUSUM.
//! - [`risk`]: Monte Carlo estimation of error rates, delay and Bayes risk.
//! - [`config`] and [`cli`]: experiment files, presets and the command line.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod environment;
pub mod error;
pub mod model;
pub mod policy;
pub mod risk;
pub mod stats;
pub mod trial;

pub use error::{Error, Result};
