//! Partially collapsed hybrid Gibbs sampler.

pub mod chain;
pub mod config;
pub mod steps;
pub mod theta;
pub mod trace;

pub use chain::{chain_rng, run_chain, run_chain_from, run_chains, sweep};
pub use config::SamplerConfig;
pub use trace::ChainTrace;
