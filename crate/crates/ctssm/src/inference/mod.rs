//! Likelihood evaluation and maximum approximate-likelihood fitting.
//!
//! The forward algorithm evaluates the discretised likelihood in O(T m^2);
//! `brute_force_loglik` evaluates the full multiple sum and serves as the
//! independent oracle. Fitting runs Nelder-Mead (optionally polished by
//! BFGS) on a log/identity-transformed parameter vector, with standard
//! errors from the observed Fisher information.

mod data;
mod fisher;
mod fit;
mod likelihood;

pub use data::{EmissionSpec, ModelSpec, ObservationSequence, PanelDataset};
pub use fisher::{fisher_from_objective, observed_fisher_ci, CiEntry, FisherInfo};
pub use fit::{
    aic, fit, fit_benchmark, moment_start, Convergence, FitOptions, FitResult, FitTemplate,
    GridInfo, Problem, Transform,
};
pub use likelihood::{brute_force_loglik, forward_loglik, panel_loglik};
