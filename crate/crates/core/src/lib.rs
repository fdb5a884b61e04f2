//! Markov structures: multivariate continuous-time Markov chains whose
//! components follow prescribed marginal laws, together with consistency
//! checks and systemic risk measures built on them.

pub mod chain;
pub mod cli;
pub mod consistency;
pub mod error;
pub mod measures;
pub mod montecarlo;
pub mod semigroup;
pub mod structures;

pub use error::{Error, Result};
