//! Equation-free coarse-grained analysis of stochastic majority-rule
//! dynamics on Erdős–Rényi networks.

pub mod cli;
pub mod coarse;
pub mod continuation;
pub mod error;
pub mod graph;
pub mod krylov;
pub mod linalg;
pub mod meanfield;
pub mod micro;
pub mod rare;
pub mod rng;

pub use error::{Error, Result};
