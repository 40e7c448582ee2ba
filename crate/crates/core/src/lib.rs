//! Bayesian exponential random graph models with nodal random effects.
//!
//! Posterior sampling uses the exchange algorithm, so the intractable
//! normalizing constant of the likelihood never has to be evaluated. Models
//! with and without nodal random effects are compared through a Bayes factor
//! assembled from a Laplace approximation over the random effects and a
//! path-sampling estimate of the ratio of normalizing constants.

pub mod cli;
pub mod datasets;
pub mod exchange;
pub mod error;
pub mod evidence;
pub mod graph;
pub mod model;
pub mod netsim;
pub mod rng;
pub mod study;

pub use error::{Error, Result};
