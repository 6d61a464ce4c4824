//! Handover optimization lab.
//!
//! Implements the 3GPP 5G NR baseline handover protocol and a PPO-trained
//! adaptive handover agent on top of a shared, timing-accurate simulated
//! radio environment, plus the tooling to generate synthetic radio traces,
//! train the agent and compare both policies across UE speeds.

pub mod cli;
pub mod env;
mod error;
pub mod evalkit;
pub mod neural;
pub mod ppo;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod tracegen;

pub use error::{Error, Result};

/// Scalar type used by the concrete pipeline.
pub type Real = f64;

pub type Mlp = neural::Mlp<Real>;
pub type AdamState = neural::AdamState<Real>;
