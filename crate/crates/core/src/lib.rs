//! Continual area sweeping on a semi-Markov gridworld.

pub mod baselines;
pub mod encoding;
pub mod error;
pub mod gridworld;
pub mod policy;
pub mod rewards;
pub mod rlearn;

pub use error::{Error, Result};
