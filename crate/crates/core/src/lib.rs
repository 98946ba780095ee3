//! Reinforcement learning with networks of GLM spiking-neuron agents.
//!
//! Each agent in a [`network::Network`] is a stochastic point-process neuron
//! whose spike train is its action. Agents learn from purely local
//! information: the score function of their own spike train, scaled by a TD
//! error broadcast from a global [`critic`]. Populations of networks
//! ([`training::Ensemble`]) average their action distributions and credit
//! each member according to whether it agreed with the executed action.

pub mod baselines;
pub mod critic;
pub mod envs;
mod error;
pub mod glm;
pub mod harness;
pub mod network;
pub mod training;

pub use error::{Error, Result};
