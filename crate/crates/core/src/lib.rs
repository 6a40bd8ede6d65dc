//! Parameter estimation for discrete Markov random fields by maximizing stochastic
//! composite likelihoods, with exact asymptotic-variance analysis, automatic component
//! weighting and FLOP accounting.

pub mod asymptotics;
pub mod beta;
pub mod data;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod linalg;
pub mod mrf;
pub mod scl;

pub use error::{Error, Result};
