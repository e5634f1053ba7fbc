//! Most-likely state sequence reconstruction (Viterbi) over the
//! discretised state space, plus expected-count trajectories from the
//! decoded states.

use crate::discretization::{matrix_cache_get, TransitionCache};
use crate::emissions::Emission;
use crate::error::{Error, Result};
use crate::inference::{ModelSpec, ObservationSequence};

/// A decoded state path: grid indices, the corresponding midpoint values,
/// and the joint log-probability of the path with the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPath {
    pub state_indices: Vec<usize>,
    pub state_values: Vec<f64>,
    pub log_joint: f64,
}

/// Log-space Viterbi decoding. Ties are broken towards the lower state
/// index so results are deterministic.
pub fn viterbi(
    seq: &ObservationSequence,
    spec: &ModelSpec,
    cache: &TransitionCache,
) -> Result<DecodedPath> {
    if spec.emission.requires_covariates() && seq.covariates().is_none() {
        return Err(Error::invalid(
            "emission model requires covariates but the sequence has none",
        ));
    }
    let m = spec.grid.m();
    let t_len = seq.len();
    let delta0 = crate::discretization::initial_distribution(&spec.process, &spec.grid)?;

    let log_b0 =
        spec.emission
            .log_pmf_vector(seq.counts()[0], seq.covariate(0), &spec.grid)?;
    let mut score: Vec<f64> = (0..m)
        .map(|i| delta0.probabilities()[i].ln() + log_b0[i])
        .collect();
    // back[t][i] = argmax predecessor of state i at step t (t >= 1)
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));

    let times = seq.times();
    for tau in 1..t_len {
        let gamma = matrix_cache_get(cache, &spec.process, &spec.grid, times[tau] - times[tau - 1])?;
        let log_b = spec.emission.log_pmf_vector(
            seq.counts()[tau],
            seq.covariate(tau),
            &spec.grid,
        )?;
        let mut next = vec![f64::NEG_INFINITY; m];
        let mut argmax = vec![0usize; m];
        for j in 0..m {
            let base = score[j];
            if base == f64::NEG_INFINITY {
                continue;
            }
            let log_row = gamma.log_row(j);
            for i in 0..m {
                let cand = base + log_row[i];
                if cand > next[i] {
                    next[i] = cand;
                    argmax[i] = j;
                }
            }
        }
        for i in 0..m {
            next[i] += log_b[i];
        }
        score = next;
        back.push(argmax);
    }

    let (mut best_i, mut best) = (0usize, f64::NEG_INFINITY);
    for (i, &s) in score.iter().enumerate() {
        if s > best {
            best = s;
            best_i = i;
        }
    }
    if !best.is_finite() {
        return Err(Error::NumericFailure {
            step: t_len - 1,
            message: "all decoded paths have zero probability".into(),
        });
    }

    let mut indices = vec![0usize; t_len];
    indices[t_len - 1] = best_i;
    for tau in (1..t_len).rev() {
        indices[tau - 1] = back[tau - 1][indices[tau]];
    }
    let values = indices.iter().map(|&i| spec.grid.midpoints()[i]).collect();
    Ok(DecodedPath {
        state_indices: indices,
        state_values: values,
        log_joint: best,
    })
}

/// Expected count at state value `x` for observation `idx` of `seq`.
pub fn expected_count(
    spec: &ModelSpec,
    seq: &ObservationSequence,
    idx: usize,
    x: f64,
) -> Result<f64> {
    match &spec.emission {
        crate::inference::EmissionSpec::PoissonScale(e) => Ok(x.exp() * e.alpha()),
        crate::inference::EmissionSpec::NegBinSpline(e) => {
            let cov = seq
                .covariate(idx)
                .ok_or_else(|| Error::invalid("covariates required for expected counts"))?;
            Ok((x + e.covariate_log_mean(cov)?).exp())
        }
    }
}

/// Expected counts along a decoded path, paired with the equilibrium
/// expectation (the state held at the process's long-term mean) for the
/// same observation times and covariates.
pub fn expected_trajectory(
    seq: &ObservationSequence,
    spec: &ModelSpec,
    path: &DecodedPath,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if path.state_values.len() != seq.len() {
        return Err(Error::invalid("decoded path length does not match sequence"));
    }
    let mu = spec.process.mu();
    let mut decoded = Vec::with_capacity(seq.len());
    let mut equilibrium = Vec::with_capacity(seq.len());
    for idx in 0..seq.len() {
        decoded.push(expected_count(spec, seq, idx, path.state_values[idx])?);
        equilibrium.push(expected_count(spec, seq, idx, mu)?);
    }
    Ok((decoded, equilibrium))
}
