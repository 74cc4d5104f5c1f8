//! Bayesian CFA-CAR factor model for locating the pathways an experiment
//! perturbs, given gene expression, a pathway catalog and a pathway network.

pub mod error;
pub mod geneset;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod network;
pub mod sampler;
pub mod simulation;

pub use error::{Error, Result};
