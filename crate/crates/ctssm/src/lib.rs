//! Continuous-time state-space models for irregularly sampled count data.
//!
//! The latent state is a continuous-time diffusion (the Ornstein-Uhlenbeck
//! process ships) observed indirectly through conditionally independent
//! counts at irregular time points. The likelihood is approximated by finely
//! discretising the state space into an m-state continuous-time hidden
//! Markov model, after which the usual HMM machinery applies: the forward
//! algorithm for the likelihood, numerical maximum likelihood for the
//! parameters, and the Viterbi algorithm for state decoding.
//!
//! Start with the runnable programs in `examples/`, one per capability.

// validations are written as `!(x > 0.0)` on purpose so NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoding;
pub mod discretization;
pub mod emissions;
pub mod error;
pub mod inference;
pub mod io;
pub mod optim;
pub mod simulation;
pub mod splines;
pub mod state_process;

pub use error::{Error, Result};
