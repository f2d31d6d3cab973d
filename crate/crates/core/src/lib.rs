//! Joint optimization of policy weights and body-design parameters.
//!
//! A single flat parameter vector holds both the weights of a small
//! feed-forward policy and a set of raw morphology parameters. Candidates are
//! drawn from a factored Gaussian, each candidate configures the body of the
//! agent *and* drives it, and the Gaussian's mean and standard deviation are
//! moved by a population estimate of the REINFORCE gradient.
//!
//! Layout:
//! - [`policy_net`]: fixed-architecture tanh network over a flat weight slice.
//! - [`es`]: search distribution, sampling, gradient estimate and update.
//! - [`env_core`]: parameter partition, morphology decoding, reward augmentation
//!   and the [`env_core::Environment`] contract.
//! - [`envs`]: benchmark functions, a spring-mass toy and a planar hopper.
//! - [`trainer`]: the generation loop, best-agent tracking and repeated runs.
//! - [`config`], [`checkpoint`], [`history`], [`plot`]: file formats used by the CLI.

pub mod checkpoint;
pub mod config;
pub mod env_core;
pub mod envs;
pub mod error;
pub mod es;
pub mod history;
pub mod plot;
pub mod policy_net;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
