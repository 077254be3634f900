//! Probabilistic obstacle avoidance for an underwater vehicle carrying a
//! multibeam forward-looking sonar.
//!
//! A polar occupancy map in the sonar frame is propagated under uncertain
//! ego-motion, updated from each ping with a Bayes rule, and scored against
//! a small set of candidate maneuvers to pick the least risky action.

pub mod channel;
pub mod config;
pub mod decision;
pub mod error;
pub mod geometry;
pub mod logio;
pub mod motion;
pub mod pipeline;
pub mod quadrature;
pub mod replay;
pub mod sim;

pub use error::{Error, Result};
