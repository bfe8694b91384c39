//! Discrete-event simulator for federated learning carried over a
//! proof-of-work blockchain.
//!
//! Clients train a feed-forward classifier on private shards, submit their
//! weights as transactions, and rebuild a global model from whatever block
//! their miner hands them. Miners race exponential mining timers, gossip
//! blocks over a finite-capacity mesh, and fork when two solutions collide.
//! The simulator records per-block age of the included updates alongside
//! model accuracy.

pub mod chain;
pub mod des;
pub mod fl;
pub mod ids;
pub mod net;
pub mod config;
pub mod error;
pub mod metrics;
pub mod experiment;
pub mod sim;

pub use config::{load_config, ExperimentConfig};
pub use error::SimError;
pub use sim::{simulate, RunResult, Simulation};
