//! Forward-algorithm likelihood, the brute-force oracle, and panel
//! aggregation.

use rayon::prelude::*;

use crate::discretization::{initial_distribution, TransitionCache};
use crate::emissions::Emission;
use crate::error::{Error, Result};

use super::data::{ModelSpec, ObservationSequence, PanelDataset};

/// Largest number of state tuples the brute-force evaluation will enumerate.
const BRUTE_FORCE_GUARD: f64 = 1e7;

/// Log-likelihood of one sequence via the scaled forward recursion:
/// a normalised forward vector is propagated through exactly T
/// matrix-vector products of size m, and log normalisers are accumulated.
pub fn forward_loglik(
    seq: &ObservationSequence,
    spec: &ModelSpec,
    cache: &TransitionCache,
) -> Result<f64> {
    if spec.emission.requires_covariates() && seq.covariates().is_none() {
        return Err(Error::invalid(
            "emission model requires covariates but the sequence has none",
        ));
    }
    let grid = &spec.grid;
    let m = grid.m();
    let delta0 = initial_distribution(&spec.process, grid)?;

    let mut loglik = 0.0f64;
    let mut forward = vec![0.0f64; m];
    let mut scratch = vec![0.0f64; m];

    // initial step: delta P(y_0)
    let log_p = spec
        .emission
        .log_pmf_vector(seq.counts()[0], seq.covariate(0), grid)?;
    let max_lp = log_p.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !max_lp.is_finite() {
        return Err(Error::NumericFailure {
            step: 0,
            message: "all emission probabilities vanished".into(),
        });
    }
    let mut norm = 0.0;
    for i in 0..m {
        forward[i] = delta0.probabilities()[i] * (log_p[i] - max_lp).exp();
        norm += forward[i];
    }
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::NumericFailure {
            step: 0,
            message: format!("forward normaliser is {norm}"),
        });
    }
    loglik += max_lp + norm.ln();
    for v in forward.iter_mut() {
        *v /= norm;
    }

    for (step, window) in seq.times().windows(2).enumerate() {
        let tau = step + 1;
        let delta = window[1] - window[0];
        let gamma = cache.get(&spec.process, grid, delta)?;
        gamma.left_multiply(&forward, &mut scratch);

        let log_p = spec
            .emission
            .log_pmf_vector(seq.counts()[tau], seq.covariate(tau), grid)?;
        let max_lp = log_p.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut norm = 0.0;
        for i in 0..m {
            scratch[i] *= (log_p[i] - max_lp).exp();
            norm += scratch[i];
        }
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NumericFailure {
                step: tau,
                message: format!("forward normaliser is {norm}"),
            });
        }
        loglik += max_lp + norm.ln();
        for i in 0..m {
            forward[i] = scratch[i] / norm;
        }
    }

    if loglik.is_nan() {
        return Err(Error::NumericFailure {
            step: seq.len() - 1,
            message: "log-likelihood is NaN".into(),
        });
    }
    Ok(loglik)
}

/// Exact evaluation of the discretised likelihood as the full (T+1)-fold
/// sum over state index tuples, in log space. Exponential cost; guarded to
/// test-scale instances. This is the oracle the forward algorithm is
/// checked against.
pub fn brute_force_loglik(seq: &ObservationSequence, spec: &ModelSpec) -> Result<f64> {
    let grid = &spec.grid;
    let m = grid.m();
    let t_plus_1 = seq.len();
    let tuples = (m as f64).powi(t_plus_1 as i32);
    if tuples > BRUTE_FORCE_GUARD {
        return Err(Error::TooLarge(format!(
            "m^(T+1) = {tuples:.3e} exceeds the brute-force guard {BRUTE_FORCE_GUARD:.0e}"
        )));
    }
    if spec.emission.requires_covariates() && seq.covariates().is_none() {
        return Err(Error::invalid(
            "emission model requires covariates but the sequence has none",
        ));
    }

    let delta0 = initial_distribution(&spec.process, grid)?;
    let log_delta: Vec<f64> = delta0.probabilities().iter().map(|&p| p.ln()).collect();
    let mut log_emissions = Vec::with_capacity(t_plus_1);
    for tau in 0..t_plus_1 {
        log_emissions.push(spec.emission.log_pmf_vector(
            seq.counts()[tau],
            seq.covariate(tau),
            grid,
        )?);
    }
    let mut log_gammas = Vec::with_capacity(t_plus_1.saturating_sub(1));
    for w in seq.times().windows(2) {
        let gamma = crate::discretization::transition_matrix(&spec.process, grid, w[1] - w[0])?;
        log_gammas.push(gamma);
    }

    // streaming log-sum-exp over all m^(T+1) index tuples via DFS
    let mut acc = LogSumExp::new();
    let mut stack_log = vec![0.0f64; t_plus_1];
    enumerate(
        0,
        0,
        &mut stack_log,
        &log_delta,
        &log_emissions,
        &log_gammas,
        m,
        &mut acc,
    );
    Ok(acc.value())
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    tau: usize,
    prev_state: usize,
    stack_log: &mut [f64],
    log_delta: &[f64],
    log_emissions: &[Vec<f64>],
    log_gammas: &[crate::discretization::TransitionMatrix],
    m: usize,
    acc: &mut LogSumExp,
) {
    let t_plus_1 = log_emissions.len();
    for state in 0..m {
        let term = if tau == 0 {
            log_delta[state] + log_emissions[0][state]
        } else {
            log_gammas[tau - 1].log_get(prev_state, state) + log_emissions[tau][state]
        };
        let partial = if tau == 0 {
            term
        } else {
            stack_log[tau - 1] + term
        };
        if partial == f64::NEG_INFINITY {
            continue;
        }
        stack_log[tau] = partial;
        if tau + 1 == t_plus_1 {
            acc.add(partial);
        } else {
            enumerate(
                tau + 1,
                state,
                stack_log,
                log_delta,
                log_emissions,
                log_gammas,
                m,
                acc,
            );
        }
    }
}

/// Online log-sum-exp accumulator with running max shift.
struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.sum += (log_term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Pooled log-likelihood over independent individuals. Forward passes run
/// in parallel; the reduction always sums in id order so the result does
/// not depend on the execution schedule.
pub fn panel_loglik(
    panel: &PanelDataset,
    spec: &ModelSpec,
    cache: &TransitionCache,
) -> Result<f64> {
    let per_sequence: Vec<Result<f64>> = panel
        .sequences()
        .par_iter()
        .map(|(_, seq)| forward_loglik(seq, spec, cache))
        .collect();
    let mut total = 0.0;
    for r in per_sequence {
        total += r?;
    }
    Ok(total)
}
